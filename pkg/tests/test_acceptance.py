"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected in ``RESULTS`` and echoed in the terminal
summary by ``conftest.py``.
"""

import math
import os

import numpy as np
import pytest

from helpers import (TABLE_ACTUAL, TABLE_SYNTHESIZED, consistency_frequencies, count_above,
                     random_hermitian, random_spec, ratio_standard_errors, two_atom_spec)
from spikecount.estimator import m_hat, omega_bound, rms_bound
from spikecount.harness import ExperimentSpec, run_experiment
from spikecount.hermitian import HermitianMatrix, eigenvalues_desc, trig_matrix
from spikecount.moment_model import b_matrix, eigen_bounds, m_p, m_p_disc
from spikecount.simulator import (SimulationSpec, default_templates, generate, overlap_fraction,
                                  participation_fraction)

RESULTS = []


def report(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_1_table_thresholding():
    counts = {name: (count_above(row, 1.0), count_above(row, 0.8))
              for name, row in (("synthesized", TABLE_SYNTHESIZED), ("actual", TABLE_ACTUAL))}
    ok = all(c == (4, 5) for c in counts.values())
    report(1, ok, f"counts at thresholds (1.0, 0.8): {counts}, expected (4, 5)")


def test_2_worked_example():
    psi = np.exp(-0.5 * (0.1 * np.arange(1, 21)) ** 2)
    omega = omega_bound(psi, 10**6, 0.05)
    rms2 = rms_bound(psi, 1000, 0.05, 20) ** 2
    ok = omega <= 0.01 and 0.10 <= rms2 <= 0.16
    report(2, ok, f"omega_bound={omega:.3g} (<= 0.01), rms_bound^2={rms2:.4f} (in [0.10, 0.16])")


def test_3_containment():
    violations, checked = 0, 0
    for seed in range(500):
        rng = np.random.default_rng([3, seed])
        s = random_spec(rng)
        p = int(rng.integers(s.nu, 21))
        ev = eigenvalues_desc(m_p(s, p)).values
        # slack covers floating-point roundoff only
        violations += int((~eigen_bounds(s, p).contains(ev, slack=1e-9)).sum())
        checked += ev.size
    report(3, violations == 0, f"{violations} violations over {checked} eigenvalues in 500 specs")


def test_4_discrete_part_equivalence():
    worst = 0.0
    for seed in range(200):
        rng = np.random.default_rng([4, seed])
        s = random_spec(rng, max_cont=0.0)
        p = int(rng.integers(s.nu, 21))
        disc = eigenvalues_desc(m_p_disc(s, p)).values
        b = eigenvalues_desc(b_matrix(s, p)).values
        padded = np.concatenate([b, np.zeros(p + 1 - s.nu)])
        worst = max(worst, float(np.max(np.abs(disc - padded))))
    report(4, worst < 1e-8, f"max |eig(disc) - eig(B) padded| = {worst:.2e} over 200 specs")


def test_5_eigensolver():
    worst = 0.0
    for seed in range(1000):
        rng = np.random.default_rng([5, seed])
        h = random_hermitian(rng, int(rng.integers(1, 9)), float(10 ** rng.uniform(-2, 2)))
        oracle = np.linalg.eigvalsh(h.to_array())[::-1]
        worst = max(worst, float(np.max(np.abs(eigenvalues_desc(h).values - oracle))))
    worst_pad = 0.0
    for seed in range(200):
        rng = np.random.default_rng([55, seed])
        cols, extra = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        a = rng.normal(size=(cols + extra, cols)) + 1j * rng.normal(size=(cols + extra, cols))
        big = eigenvalues_desc(HermitianMatrix(a @ a.conj().T)).values
        small = eigenvalues_desc(HermitianMatrix(a.conj().T @ a)).values
        padded = np.concatenate([small, np.zeros(extra)])
        worst_pad = max(worst_pad, float(np.max(np.abs(big - padded))))
    ok = worst < 1e-8 and worst_pad < 1e-8
    report(5, ok, f"max error vs LAPACK {worst:.2e} (1000 matrices), "
                  f"Gram padding {worst_pad:.2e} (200 cases)")


def test_6_consistency_sweep():
    sizes = [(250, 500), (1000, 2000), (4000, 8000)]
    freq = consistency_frequencies(two_atom_spec(), sizes, 50, seed=6)
    ok = all(a <= b for a, b in zip(freq, freq[1:])) and freq[-1] >= 0.95
    shown = ", ".join(f"{n}/{m}: {100 * f:.0f}%" for (n, m), f in zip(sizes, freq))
    report(6, ok, f"correct-count frequency {shown} (nondecreasing, top >= 95%)")


def _grid(exp_id, nu_list, n, m, workers):
    table = run_experiment(ExperimentSpec(exp_id, tuple(nu_list), n, m, 25, seed=1),
                           workers=workers)
    return {nu: table[(exp_id, n, m, nu)].frequency for nu in nu_list}


def test_7_experiment_grid():
    workers = min(5, os.cpu_count() or 1)
    e1 = _grid(1, range(1, 6), 1000, 2000, workers)
    e3 = _grid(3, range(1, 6), 1000, 2000, workers)
    e1_small = _grid(1, (5,), 500, 1000, workers)
    e6 = _grid(6, (1, 2), 1000, 2000, workers)
    e5 = _grid(5, range(2, 6), 1000, 2000, workers)
    a = all(e[1] >= 60 and all(e[nu] >= 85 for nu in range(2, 6)) for e in (e1, e3))
    b = e1_small[5] <= 40
    c = all(v < 50 for v in e6.values()) and all(v >= 85 for v in e5.values())
    fmt = lambda e: "/".join(f"{v:.0f}" for v in e.values())
    report(7, a and b and c,
           f"(a) exp1 {fmt(e1)}, exp3 {fmt(e3)} [{'ok' if a else 'bad'}]; "
           f"(b) exp1 n=500 nu=5 {fmt(e1_small)} [{'ok' if b else 'bad'}]; "
           f"(c) exp6 nu=1,2 {fmt(e6)}, exp5 nu=2..5 {fmt(e5)} [{'ok' if c else 'bad'}]")


def test_8_overlap_rate():
    bank = default_templates(1)
    clusters, participation = [], []
    for seed in range(20):
        gt = generate(SimulationSpec(bank, 400_000, 800 + seed)).ground_truth
        clusters.append(overlap_fraction(gt, 45))
        participation.append(participation_fraction(gt, 45))
    frac = float(np.mean(clusters))
    report(8, abs(frac - 0.10) <= 0.03,
           f"overlapping-spike fraction {frac:.3f} (0.10 +- 0.03); "
           f"share of events in a collision {np.mean(participation):.3f}")


def test_9_convergence():
    rng = np.random.default_rng(9)
    theta, n, p = 2.3, 100_000, 10
    x = theta + 0.1 * rng.standard_normal(n)
    y = 0.1 * rng.standard_normal(n)
    got, want = m_hat(x, y, p).to_array(), trig_matrix(theta, p).to_array()
    se_re, se_im = ratio_standard_errors(x, y, range(0, p + 1))
    j, k = np.indices(got.shape)
    lag = np.abs(j - k)
    # lag 0 is exactly one on both sides, so its zero standard error is fine
    err = got - want
    ok = (np.all(np.abs(err.real) <= 3 * se_re[lag] + 1e-12)
          and np.all(np.abs(err.imag) <= 3 * se_im[lag] + 1e-12))
    z = np.max(np.abs(err.real[lag > 0]) / se_re[lag[lag > 0]])
    report(9, ok, f"all entries up to lag {p} within 3 SE (max real-part z = {z:.2f})")
