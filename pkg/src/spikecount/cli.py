"""Command-line interface.

Exit codes: 0 success, 2 input or format error, 3 pipeline error,
4 no admissible moment-matrix order.
"""

import argparse
import json
import sys
from pathlib import Path

from .detector import DetectorConfig, detect
from .errors import FormatError, SpikeCountError
from .estimator import EstimateReport, EstimatorConfig, estimate_nu, read_spike_csv, write_spike_csv
from .harness import ExperimentSpec, FrequencyTable, analyze_recording, run_experiment, write_text
from .simulator import (SimulationSpec, default_templates, generate, overlap_fraction, read_bundle,
                        write_bundle)

EXIT_OK, EXIT_INPUT, EXIT_PIPELINE, EXIT_NO_P = 0, 2, 3, 4


def _add_estimator_args(p):
    g = p.add_argument_group("estimator")
    g.add_argument("--gamma", type=float, default=1.0, help="count threshold (default 1.0)")
    g.add_argument("--sigma-target", type=float, default=0.1)
    g.add_argument("--epsilon", type=float, default=0.05)
    g.add_argument("--condition-rhs", type=float, default=1.0 / 3.0)
    g.add_argument("--p-cap", type=int, default=64)
    g.add_argument("--p", type=int, default=None, help="fixed order instead of automatic selection")
    g.add_argument("--zero-pad-fraction", type=float, default=0.01)
    g.add_argument("--condition-variant", choices=("literal_p", "per_j"), default="literal_p")
    g.add_argument("--threshold-scaling", choices=("absolute", "sqrt_p"), default="absolute")


def _estimator_cfg(a):
    return EstimatorConfig(gamma=a.gamma, sigma_target=a.sigma_target, epsilon=a.epsilon,
                           condition_rhs=a.condition_rhs, p_cap=a.p_cap, p=a.p,
                           zero_pad_fraction=a.zero_pad_fraction,
                           condition_variant=a.condition_variant,
                           threshold_scaling=a.threshold_scaling)


def _add_detector_args(p, m_default=2000):
    g = p.add_argument_group("detector")
    g.add_argument("--threshold-sigmas", type=float, default=2.25)
    g.add_argument("--window-d", type=int, default=45)
    g.add_argument("--peak-index", type=int, default=15)
    g.add_argument("--refractory-samples", type=int, default=None)
    g.add_argument("--noise-count-m", type=int, default=m_default)
    g.add_argument("--confirm-width", type=int, default=3)


def _detector_cfg(a):
    return DetectorConfig(threshold_sigmas=a.threshold_sigmas, window_d=a.window_d,
                          peak_index=a.peak_index, refractory_samples=a.refractory_samples,
                          noise_count_m=a.noise_count_m, confirm_width=a.confirm_width)


def _print_report(rep, out=None):
    out = out or sys.stdout
    print(f"n={rep.n} m={rep.m} p={rep.p_used}{'' if rep.p_auto else ' (fixed)'} "
          f"condition={rep.condition_lhs:.4f}", file=out)
    print(f"threshold={rep.threshold:g} nu_hat={rep.nu_hat}", file=out)
    if rep.rms_bound is not None:
        print(f"rms_bound={rep.rms_bound:.4f} omega_bound={rep.omega_bound:.3g}", file=out)
    print("eigenvalues:", file=out)
    print(rep.format_eigenvalues(), file=out)


def cmd_simulate(a):
    templates = default_templates(a.nu, least_favorable=not a.most_favorable)
    spec = SimulationSpec(templates, a.duration_samples, a.seed, a.firing_rate, a.noise_kind,
                          a.overlap_policy)
    rec = generate(spec)
    stem = write_bundle(rec, a.out)
    gt = rec.ground_truth
    print(f"wrote {stem}.f64 and {stem}.json: {rec.trace.size} samples, {len(gt)} events, "
          f"overlap fraction {overlap_fraction(gt, spec.d):.3f}")
    return EXIT_OK


def cmd_detect(a):
    rec = read_bundle(a.bundle)
    data = detect(rec.trace, _detector_cfg(a))
    write_spike_csv(data, a.out_spikes, a.out_noise)
    print(f"{data.n} spikes, {data.m} noise windows -> {a.out_spikes}, {a.out_noise}")
    return EXIT_OK


def cmd_estimate(a):
    cfg = _estimator_cfg(a)
    if a.bundle:
        rep = analyze_recording(a.bundle, _detector_cfg(a), cfg)
    else:
        if not (a.spikes and a.noise):
            raise FormatError("give --bundle or both --spikes and --noise")
        rep = estimate_nu(read_spike_csv(a.spikes, a.noise, a.sigma), cfg)
    _print_report(rep)
    if a.out:
        write_text(a.out, rep.to_json(indent=2))
    return EXIT_OK


def cmd_experiment(a):
    table = FrequencyTable()
    for eid in a.experiment_id:
        spec = ExperimentSpec(eid, tuple(a.nu_list), a.n, a.m, a.repetitions, a.seed,
                              estimator=_estimator_cfg(a))
        table = table.merge(run_experiment(spec, workers=a.workers))
    print(table.format())
    if a.out:
        write_text(a.out, table.to_csv())
    return EXIT_OK


def cmd_rethreshold(a):
    try:
        rep = EstimateReport.from_json(Path(a.report).read_text())
    except (json.JSONDecodeError, OSError) as exc:
        raise FormatError(f"cannot read report {a.report}: {exc}") from exc
    new = rep.rethreshold(a.threshold)
    _print_report(new)
    if a.out:
        write_text(a.out, new.to_json(indent=2))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="spikecount",
                                     description="Estimate the number of neurons in a spike train.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic recording bundle")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--nu", type=int, default=3)
    p.add_argument("--duration-samples", type=int, default=400_000)
    p.add_argument("--firing-rate", type=float, default=1.0 / 400.0)
    p.add_argument("--noise-kind", choices=("gaussian", "t5_scaled"), default="gaussian")
    p.add_argument("--overlap-policy", choices=("natural", "forbid_overlap"), default="natural")
    p.add_argument("--most-favorable", action="store_true",
                   help="use the largest templates instead of the smallest")
    p.add_argument("--out", required=True, help="bundle path stem")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="detect spikes in a bundle and write CSVs")
    p.add_argument("bundle")
    _add_detector_args(p)
    p.add_argument("--out-spikes", required=True)
    p.add_argument("--out-noise", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("estimate", help="estimate the number of neurons")
    p.add_argument("--bundle", help="recording bundle (runs the detector first)")
    p.add_argument("--spikes", help="spike CSV with header s1..sd")
    p.add_argument("--noise", help="noise CSV with header y or s1..sd")
    p.add_argument("--sigma", type=float, default=None,
                   help="noise sd of the CSV data (default: sample sd of the noise)")
    _add_estimator_args(p)
    _add_detector_args(p)
    p.add_argument("--out", help="write the full report as JSON")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("experiment", help="run simulated experiments and tabulate frequencies")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--experiment-id", type=int, nargs="+", default=[1], choices=range(1, 9))
    p.add_argument("--nu-list", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--m", type=int, default=2000)
    p.add_argument("--repetitions", type=int, default=25)
    p.add_argument("--workers", type=int, default=1)
    _add_estimator_args(p)
    p.add_argument("--out", help="write the table as CSV")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("rethreshold", help="recount a stored report at a new threshold")
    p.add_argument("report")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rethreshold)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpikeCountError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
