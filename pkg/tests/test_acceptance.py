"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v -s`` (or execute this file) to see
the summary lines. The statistical experiments take about a minute with the
compiled kernels.
"""

import filecmp
import math
import os
import sys

import numpy as np

from qmmw import analysis as an
from qmmw import game as qg
from qmmw import learning as lrn
from qmmw.basis import build_basis, pivot, safety_params
from qmmw.cli import main as cli_main
from qmmw.fixtures import get_fixture
from qmmw.hermitian import eigh, random_density
from qmmw.seeding import run_rng

HORIZONS = (100, 1_000, 10_000, 100_000)
RESULTS = {}


def report(n, title, ok, detail, capsys=None):
    line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}: {title} -- {detail}"
    RESULTS[n] = line
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    assert ok, line


def _runs(game, algo, T, seeds, base=0, schedule=None, reference=None):
    consts = qg.constants(game)
    if schedule is None:
        schedule = lrn.theorem_tuning(algo, T, consts, game.dims)
    return [lrn.run(game, algo, schedule, T, run_rng(base, s), reference=reference)
            for s in range(seeds)]


# ---------------------------------------------------------------- 1


def criterion_1():
    rng = np.random.default_rng(1)
    worst = {"gram": 0.0, "trace": 0.0, "psd": math.inf, "pivot": math.inf}
    for d in range(2, 7):
        basis = build_basis(d)
        if len(basis) != d * d - 1:
            return False, f"d={d}: {len(basis)} elements"
        e = basis.elements
        gram = np.einsum("aij,bij->ab", e.conj(), e).real
        worst["gram"] = max(worst["gram"], float(np.abs(gram - np.eye(len(basis))).max()))
        worst["trace"] = max(worst["trace"], float(np.abs(np.trace(e, axis1=1, axis2=2)).max()))
        params = safety_params(d)
        r = params.radius
        for w in e:
            for s in (1, -1):
                lo = eigh(params.reference + s * r * w).eigenvalues[0]
                worst["psd"] = min(worst["psd"], float(lo))
        for _ in range(1_000):
            x = random_density(rng, d)
            for delta in (r / 2, 0.99 * r):
                xh = pivot(x, delta, params)
                pts = np.concatenate([xh + delta * e, xh - delta * e])
                lo = np.linalg.eigvalsh(pts).min()
                worst["pivot"] = min(worst["pivot"], float(lo))
    ok = (worst["gram"] <= 1e-12 and worst["trace"] <= 1e-12 and worst["psd"] >= -1e-12
          and worst["pivot"] >= -1e-12)
    detail = (f"gram err {worst['gram']:.2e}, trace {worst['trace']:.2e}, "
              f"min eig R+rW {worst['psd']:.2e}, min eig pivot+-dW {worst['pivot']:.2e}")
    return ok, detail


def test_criterion_1_basis_feasibility(capsys):
    report(1, "basis and feasibility suite", *criterion_1(), capsys=capsys)


# ---------------------------------------------------------------- 2


def criterion_2():
    rng = np.random.default_rng(2)
    worst = math.inf
    for d in (2, 3, 4):
        for _ in range(10_000):
            p = random_density(rng, d)
            x = random_density(rng, d)
            gap = lrn.bregman(p, x) - 0.5 * np.sum(np.abs(p - x) ** 2)
            worst = min(worst, gap)
    return worst >= -1e-9, f"min D - |P-X|^2/2 = {worst:.3e} over 3x10^4 pairs"


def test_criterion_2_pinsker(capsys):
    report(2, "Pinsker audit", *criterion_2(), capsys=capsys)


# ---------------------------------------------------------------- 3


def criterion_3():
    game = get_fixture("matching-pennies")
    eq = [np.asarray(x) for x in game.equilibrium]
    parts = []
    ok = True
    for algo in lrn.Algo:
        trs = _runs(game, algo, 1_000, 20, reference=eq)
        low = min(tr.min_residual for tr in trs)
        ok &= low >= -1e-8
        parts.append(f"{algo.value} {low:.2e}")
    return ok, "min residual " + ", ".join(parts)


def test_criterion_3_energy_inequality(capsys):
    report(3, "energy inequality along runs", *criterion_3(), capsys=capsys)


# ---------------------------------------------------------------- 4


def criterion_4():
    game = get_fixture("matching-pennies")
    c = qg.constants(game)
    parts = []
    ok = True
    for T in (100, 1_000, 10_000):
        tr = _runs(game, "mmw", T, 1)[0]
        bound = c.L * math.sqrt(2 * c.hmax / T)
        ok &= tr.gap[-1] <= bound
        parts.append(f"T={T}: {tr.gap[-1]:.3g} <= {bound:.3g}")
    return ok, "; ".join(parts)


def test_criterion_4_full_information_rate(capsys):
    report(4, "full-information rate", *criterion_4(), capsys=capsys)


# ---------------------------------------------------------------- 5, 6


def _moments(kind, seed):
    game = get_fixture("matching-pennies")
    return an.estimator_moments(game, qg.uniform_profile(game), kind, 0.05, 100_000,
                                np.random.default_rng(seed))


def criterion_5():
    r = _moments("3mw-2pe", 5)
    ok = bool(r.bias_pass and r.second_pass)
    return ok, (f"bias {r.bias:.3g} (se {r.bias_se:.2g}) <= {r.bias_bound:.3g}; "
                f"E|Z|^2 {r.second_moment:.4g} (se {r.second_se:.2g}) <= {r.second_bound:.4g}")


def criterion_6():
    r = _moments("3mw-1pe", 6)
    ok = bool(r.sample_norm_pass and r.second_pass)
    return ok, (f"max |Z_i|/D_i {r.sample_norm_max:.6g} <= B/delta {r.sample_norm_bound:.6g}; "
                f"E|Z|^2 {r.second_moment:.4g} (se {r.second_se:.2g}) <= {r.second_bound:.4g}")


def test_criterion_5_two_point_moments(capsys):
    report(5, "2PE moment bounds", *criterion_5(), capsys=capsys)


def test_criterion_6_one_point_moments(capsys):
    report(6, "1PE moment bounds", *criterion_6(), capsys=capsys)


# ---------------------------------------------------------------- 7, 8


def _rate_experiment(algo, bound_fn, band):
    game = get_fixture("skewed-pennies")
    c = qg.constants(game)
    means = {}
    tail = None
    ok = True
    parts = []
    for T in HORIZONS:
        trs = _runs(game, algo, T, 20)
        mean = an.aggregate(trs, column="gap")
        means[T] = float(mean.mean[-1])
        bound = bound_fn(c, game.dims, T)
        ok &= means[T] <= bound
        parts.append(f"T={T}: {means[T]:.3g} <= {bound:.3g}")
        if T == HORIZONS[-1]:
            tail = an.tail_rate_fit(mean.t, mean.mean, T)
    across = np.polyfit(np.log(HORIZONS), np.log([means[T] for T in HORIZONS]), 1)[0]
    slope_ok = band[0] <= tail.slope <= band[1]
    detail = (", ".join(parts) + f"; tail slope {tail.slope:.3f} in {list(band)}: "
              f"{'yes' if slope_ok else 'no'} (across-horizon slope {across:.3f})")
    return bool(ok and slope_ok), detail


def _bound_2pe(c, dims, T):
    D = max(d * d - 1 for d in dims)
    return 8 * D * c.L * math.sqrt(2 * c.hmax / T)


def _bound_1pe(c, dims, T):
    D = max(d * d - 1 for d in dims)
    return 2 ** 0.75 * 8 * c.hmax ** 0.25 * D * math.sqrt(c.B * c.L2) / T ** 0.25


def criterion_7():
    return _rate_experiment("3mw-2pe", _bound_2pe, (-0.65, -0.35))


def criterion_8():
    return _rate_experiment("3mw-1pe", _bound_1pe, (-0.40, -0.10))


def test_criterion_7_two_point_rate(capsys):
    report(7, "2PE convergence rate", *criterion_7(), capsys=capsys)


def test_criterion_8_one_point_rate(capsys):
    report(8, "1PE convergence rate", *criterion_8(), capsys=capsys)


# ---------------------------------------------------------------- 9

VS_SCHEDULE = lrn.Schedule.power(0.1, 0.9, 0.7, 0.2)


def criterion_9():
    game = get_fixture("dominant")
    eq = [np.asarray(x) for x in game.equilibrium]
    cert = qg.vs_certificate(game, eq, 0.1, 10_000, np.random.default_rng(9))
    T = 100_000
    trs = _runs(game, "3mw-1pe", T, 50, schedule=VS_SCHEDULE, reference=eq)
    res = an.vs_success_rate(trs, eq, 1e-2)
    med = np.median(np.vstack([tr.bregman for tr in trs]), axis=0)
    last = trs[0].t >= T / 10
    mono = an.nonincreasing(med[last])
    ok = cert.plausible and res.fraction >= 0.9 and mono
    detail = (f"certificate max {cert.max_value:.3g} ({'ok' if cert.plausible else 'fails'}); "
              f"success {res.fraction:.2f} (need >= 0.90), median final D "
              f"{np.median(res.finals):.3g}; median series nonincreasing over last decade: {mono}")
    return bool(ok), detail


def test_criterion_9_vs_last_iterate(capsys):
    report(9, "VS last-iterate convergence", *criterion_9(), capsys=capsys)


# ---------------------------------------------------------------- 10


def criterion_10():
    good = lrn.schedule_validate_vs(0.9, 0.2)
    slow = lrn.schedule_validate_vs(0.5, 0.2)
    fast = lrn.schedule_validate_vs(1.2, 0.2)
    names = lambda rep: [s.name for s in rep.failing]
    # at (0.5, 0.2) p + q = 0.7 <= 1, so the gamma*delta series fails as well
    ok = (good.valid
          and names(slow) == ["sum gamma*delta converges", "sum gamma^2/delta^2 converges"]
          and names(fast) == ["sum gamma diverges"])
    return ok, (f"(0.9,0.2) valid={good.valid}; (0.5,0.2) fails {names(slow)}; "
                f"(1.2,0.2) fails {names(fast)}")


def test_criterion_10_schedule_validator(capsys):
    report(10, "schedule validator", *criterion_10(), capsys=capsys)


# ---------------------------------------------------------------- 11


def criterion_11(tmp):
    configs = [
        ["--game", "matching-pennies", "--algo", "mmw", "--T", "1000"],
        ["--game", "skewed-pennies", "--algo", "3mw-2pe", "--T", "20000", "--seeds", "3"],
        ["--game", "skewed-pennies", "--algo", "3mw-1pe", "--T", "5000", "--seeds", "3",
         "--stride", "7"],
        ["--game", "dominant", "--algo", "3mw-1pe", "--schedule", "power:0.1,0.9,0.7,0.2",
         "--T", "3000", "--seeds", "2", "--base-seed", "17"],
    ]
    compared = 0
    for k, cfg in enumerate(configs):
        first = os.path.join(tmp, f"a{k}")
        second = os.path.join(tmp, f"b{k}")
        if cli_main(["run", *cfg, "--out", first]) != 0:
            return False, f"config {k} failed to run"
        manifest = os.path.join(first, "manifest.json")
        if cli_main(["run", "--manifest", manifest, "--out", second, "--workers", "2"]) != 0:
            return False, f"replay of config {k} failed"
        names = sorted(f for f in os.listdir(first) if f.endswith(".csv"))
        match, mismatch, errors = filecmp.cmpfiles(first, second, names, shallow=False)
        if mismatch or errors:
            return False, f"config {k}: differing files {mismatch + errors}"
        compared += len(match)
    return True, f"{compared} CSV files byte-identical across {len(configs)} manifest replays"


def test_criterion_11_reproducibility(capsys, tmp_path):
    report(11, "reproducibility from manifest", *criterion_11(str(tmp_path)), capsys=capsys)


if __name__ == "__main__":
    import tempfile

    checks = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
              criterion_7, criterion_8, criterion_9, criterion_10]
    failed = 0
    for n, fn in enumerate(checks, start=1):
        ok, detail = fn()
        failed += not ok
        print(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}: {detail}", flush=True)
    with tempfile.TemporaryDirectory() as tmp:
        ok, detail = criterion_11(tmp)
    failed += not ok
    print(f"criterion 11 {'PASS' if ok else 'FAIL'}: {detail}")
    sys.exit(1 if failed else 0)
