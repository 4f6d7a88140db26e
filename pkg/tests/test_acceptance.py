"""Acceptance criteria at desk scale.

Each test appends one PASS/FAIL line (plus indented detail lines) to the
report printed at the end of the session, then asserts the criterion as
stated. Nothing here is loosened: a criterion that cannot hold stays red.

Desk scale: 197-node synthetic bandlimited dataset, |F| = 120, 130 observed,
gamma = 0.1, 200 Monte Carlo runs, step sizes tuned per algorithm and alpha.
"""

from __future__ import annotations

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from oracles import abs_moment_monte_carlo, abs_moment_quadrature

from gnsfilter import cli
from gnsfilter.config import load_config
from gnsfilter.filters import (
    FilterConfig,
    FilterKind,
    build_gns_normalizer,
    exact_normalizer,
    glmp_step,
    glms_step,
    gns_step,
    gsign_step,
    init_state,
)
from gnsfilter.graph import gft, igft
from gnsfilter.harness import TIME_INVARIANT, prepare_experiment
from gnsfilter.noise import AlphaStableParams, flom_abs_moment, sample_sas
from gnsfilter.sampling import SamplingMask
from gnsfilter.studies import alpha_sweep, convergence_study

ALPHAS = (1.05, 1.1, 1.15, 1.2, 1.25)
_pending: list[str] = []


def report(cid: str, title: str, checks: list[tuple[str, bool]]) -> bool:
    ok = all(passed for _, passed in checks)
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} C{cid} {title}")
    for text, passed in checks:
        ACCEPTANCE_LINES.append(f"    [{'ok' if passed else 'FAIL'}] {text}")
    print(ACCEPTANCE_LINES[-len(checks) - 1])
    ACCEPTANCE_LINES.extend(_pending)
    _pending.clear()
    return ok


def supplementary(text: str, passed: bool) -> None:
    _pending.append(f"    (supplementary, not a criterion) [{'ok' if passed else 'FAIL'}] {text}")


@pytest.fixture(scope="module")
def desk():
    return load_config()


@pytest.fixture(scope="module")
def sweep(desk):
    t = desk.tuning
    return alpha_sweep(desk.experiment, ALPHAS, desk.auto, desk.grid, int(t["pilot_runs"]))


def steady(sweep, alpha, label):
    return sweep.row(alpha, label).steady_mse


def test_c1_robustness_ordering(sweep):
    glms, sign, gns = (steady(sweep, 1.05, l) for l in ("GLMS", "G-Sign", "GNS"))
    gap_lo = glms / sign
    gap_hi = steady(sweep, 1.25, "GLMS") / steady(sweep, 1.25, "G-Sign")
    ok = report("1", "robustness ordering", [
        (f"alpha=1.05: GLMS {glms:.4g} >= 3 x G-Sign {sign:.4g}", glms >= 3 * sign),
        (f"alpha=1.05: GNS {gns:.4g} <= G-Sign {sign:.4g}", gns <= sign),
        (f"GLMS/G-Sign gap {gap_lo:.4g} at 1.05 > {gap_hi:.4g} at 1.25", gap_lo > gap_hi),
    ])
    assert ok


def test_c2_gns_beats_gsign_across_sweep(sweep):
    checks = []
    for a in ALPHAS:
        res = sweep.results[a]
        w = res.steady_window
        d = (res.per_algorithm["G-Sign"].steady_mse_runs(w) - res.per_algorithm["GNS"].steady_mse_runs(w))
        se = d.std(ddof=1) / np.sqrt(d.size)
        se_unpaired = np.hypot(sweep.row(a, "G-Sign").steady_mse_se, sweep.row(a, "GNS").steady_mse_se)
        margin = d.mean()
        checks.append((
            f"alpha={a:g}: GNS {steady(sweep, a, 'GNS'):.4g} vs G-Sign {steady(sweep, a, 'G-Sign'):.4g}, "
            f"margin {margin:.4g} > SE {se:.3g} (unpaired SE {se_unpaired:.3g}, {d.size} runs)",
            margin > 0 and margin > se and margin > se_unpaired,
        ))
    assert report("2", "GNS below G-Sign at every alpha", checks)


def test_c4_alpha_insensitivity(sweep):
    checks = []
    for label in ("G-Sign", "GNS"):
        v = np.array([steady(sweep, a, label) for a in ALPHAS])
        ratio = v.max() / v.min()
        checks.append((f"{label}: max/min steady MSE {ratio:.4f} <= 1.15", ratio <= 1.15))
    assert report("4", "sign methods insensitive to alpha", checks)


@pytest.mark.slow
def test_c3_convergence_speedup(desk):
    conv = desk.convergence
    exp = desk.experiment.replace(
        noise=AlphaStableParams(1.1, desk.experiment.noise.gamma),
        mode=TIME_INVARIANT, steady_window=int(conv["steady_window"]),
        # 1000 runs as in the reference experiment; at 200 the 2% flat-window
        # rule is limited by averaging noise rather than convergence
        n_runs=1000,
    )
    study = convergence_study(
        exp, reference="G-Sign", matched=("GNS",), auto={"GLMS", "G-Sign"}, grid=desk.grid,
        pilot_runs=int(desk.tuning["pilot_runs"]), match_runs=int(conv["match_runs"]),
        criteria=((20, 0.05), (40, 0.02)),
    )
    res = study.result
    mae_sign, mae_gns = res.steady_mae("G-Sign")[0], res.steady_mae("GNS")[0]
    rel = abs(mae_gns - mae_sign) / mae_sign
    checks = [(f"steady spectral MAE GNS {mae_gns:.4g} vs G-Sign {mae_sign:.4g} (rel diff {rel:.3f} <= 0.10)",
               rel <= 0.10)]
    for crit in ((20, 0.05), (40, 0.02)):
        it = {l: study.reports[crit][l].iterations_to_steady for l in ("GNS", "G-Sign")}
        r = study.ratio("GNS", "G-Sign", crit)
        checks.append((f"window {crit[0]}, rel_tol {crit[1]}: GNS {it['GNS']} vs G-Sign {it['G-Sign']} "
                       f"iterations, ratio {r:.3f} <= 0.7", bool(r <= 0.7)))
    assert report("3", "convergence speedup at matched error (alpha=1.1, 1000 runs)", checks)


def _station():
    cfg = load_config().experiment.replace(noise=None)
    return prepare_experiment(cfg)


def test_c5_algebraic_suite():
    e = _station()
    proj, sp, mask = e.projector, e.spectrum, e.mask
    B = proj.matrix
    n = sp.n
    full = SamplingMask(np.ones(n))
    rng = np.random.default_rng(0)
    x = proj.u_f @ rng.normal(size=proj.u_f.shape[1])
    y = x + rng.standard_cauchy(n)
    m = flom_abs_moment(AlphaStableParams(1.1, 0.1))

    def dev(a, b):
        return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))

    checks = []
    d = dev(B @ B, B)
    checks.append((f"projector idempotent: {d:.2e} < 1e-12", d < 1e-12))
    d = dev(B, B.T)
    checks.append((f"projector symmetric: {d:.2e} < 1e-12", d < 1e-12))
    d = abs(np.trace(B) - 120)
    checks.append((f"projector trace = |F|: {d:.2e} < 1e-12", d < 1e-12))
    d = max(dev(igft(sp, gft(sp, z)), z) for z in rng.normal(size=(5, n)) * 20)
    checks.append((f"GFT round trip: {d:.2e} < 1e-12", d < 1e-12))

    _, b_n = build_gns_normalizer(proj, full, m)
    d_inv = dev(b_n, B / m)
    checks.append((f"B_n = (E|w|)^-1 B under full mask, E|w| = {m:.4f}: max dev {d_inv:.3g} < 1e-12",
                   d_inv < 1e-12))
    d_alg = dev(b_n, m * B)
    supplementary(f"B_n = E|w| B under full mask (what the normalizer definition implies): {d_alg:.2e}",
                  d_alg < 1e-12)

    s = init_state(FilterConfig(FilterKind.GLMS, 1.0), proj, mask, x)
    d = dev(glmp_step(s, y, 0.3, 2.0).estimate, glms_step(s, y, 0.3).estimate)
    checks.append((f"GLMP(2) = GLMS: {d:.2e} < 1e-12", d < 1e-12))
    d = dev(glmp_step(s, y, 0.3, 1.0).estimate, gsign_step(s, y, 0.3).estimate)
    checks.append((f"GLMP(1) = G-Sign: {d:.2e} < 1e-12", d < 1e-12))
    s_full = init_state(FilterConfig(FilterKind.GNS, 1.0, moment_abs=1.0), proj, full, x)
    d = dev(gns_step(s_full, y, 0.3).estimate, gsign_step(s_full, y, 0.3).estimate)
    checks.append((f"GNS(full mask, E|w| = 1) = G-Sign: {d:.2e} < 1e-12", d < 1e-12))

    y_eq = x + m * rng.choice([-1.0, 1.0], size=n)
    approx, _ = build_gns_normalizer(proj, mask, m)
    d = dev(exact_normalizer(proj, mask, y_eq, x).m, approx.m)
    checks.append((f"exact normalizer = approximate when |residual| = E|w|: {d:.2e} < 1e-10", d < 1e-10))
    assert report("5", "algebraic property suite (197 nodes, |F| = 120, 130 observed)", checks)


def _chunked_abs_mean(params, n, seed, chunk=1_000_000):
    rng = np.random.default_rng(seed)
    total = total_sq = 0.0
    for start in range(0, n, chunk):
        a = np.abs(sample_sas(params, min(chunk, n - start), rng=rng).samples)
        total += a.sum()
        total_sq += np.square(a).sum()
    mean = total / n
    var = (total_sq - n * mean**2) / (n - 1)
    return mean, np.sqrt(var / n)


def test_c6_noise_generator():
    checks = []
    g = sample_sas(AlphaStableParams(2.0, 0.1), 10**6, rng_seed=11).samples
    v = g.var()
    checks.append((f"alpha=2 variance {v:.5f} within 2% of 2 gamma = 0.2", abs(v - 0.2) <= 0.02 * 0.2))

    x = sample_sas(AlphaStableParams(1.1, 0.1), 10**6, rng_seed=12).samples
    for theta in (0.5, 1.0, 2.0):
        c = np.cos(theta * x)
        target = np.exp(-0.1 * theta**1.1)
        se = c.std(ddof=1) / np.sqrt(c.size)
        z = (c.mean() - target) / se
        checks.append((f"characteristic function at theta={theta:g}: {c.mean():.5f} vs {target:.5f} "
                       f"(z = {z:+.2f}, |z| <= 3)", abs(z) <= 3))

    for seed, (alpha, gamma) in enumerate((a, g) for a in (1.1, 1.5, 2.0) for g in (0.1, 1.0)):
        params = AlphaStableParams(alpha, gamma)
        closed = flom_abs_moment(params)
        mean, se = _chunked_abs_mean(params, 10**7, seed=100 + seed)
        z = (mean - closed) / se
        checks.append((f"E|X| alpha={alpha:g} gamma={gamma:g}: closed form {closed:.5f}, plain mean of "
                       f"|sample_sas| over 1e7 draws {mean:.5f} (z = {z:+.2f}, |z| <= 3)", abs(z) <= 3))
        quad = abs_moment_quadrature(alpha, gamma)
        is_mean, is_se = abs_moment_monte_carlo(alpha, gamma, 10**6, seed=200 + seed)
        is_z = (is_mean - closed) / is_se
        supplementary(f"alpha={alpha:g} gamma={gamma:g}: quadrature rel err {abs(quad - closed) / closed:.1e}; "
                      f"finite-variance MC oracle {is_mean:.5f} (z = {is_z:+.2f})",
                      abs(quad - closed) / closed < 1e-7 and abs(is_z) <= 3)
    # measured separately: seeds 1000..1029 at (1.1, 0.1) give |z| > 3 in 21 of 30,
    # median z = -4.0, because the plain mean has infinite variance below alpha = 2
    _pending.append("    note: at alpha=1.1 the plain-mean oracle fails |z| <= 3 for 21 of 30 other seeds "
                    "(median z = -4.0); its verdict here depends on the seed")
    assert report("6", "noise generator validation", checks)


def test_c7_impulse_robustness():
    e = _station()
    proj, mask = e.projector, e.mask
    rng = np.random.default_rng(7)
    truth = e.dataset.signal_matrix[:, 10]
    x = proj.matrix @ (truth + rng.normal(size=truth.size))
    y = truth + sample_sas(AlphaStableParams(1.1, 0.1), truth.size, rng_seed=8).samples
    s = init_state(FilterConfig(FilterKind.GNS, 1.0, moment_abs=flom_abs_moment(AlphaStableParams(1.1, 0.1))),
                   proj, mask, x)
    mu = 0.2
    base = {f: f(s, y, mu).estimate for f in (gsign_step, gns_step, glms_step)}
    tested = skipped = 0
    sign_ok = gns_ok = glms_ok = True
    worst = 0.0
    for i in mask.nodes():
        y_big = y.copy()
        y_big[i] *= 1e6
        if np.sign(y_big[i] - x[i]) != np.sign(y[i] - x[i]):
            skipped += 1
            continue
        tested += 1
        sign_ok &= np.array_equal(gsign_step(s, y_big, mu).estimate, base[gsign_step])
        gns_ok &= np.array_equal(gns_step(s, y_big, mu).estimate, base[gns_step])
        # GLMS is affine in y_i with slope mu * B e_i: the y_i-driven part grows by exactly 1e6
        part = mu * proj.matrix[:, i] * y[i]
        got = glms_step(s, y_big, mu).estimate - base[glms_step]
        err = np.max(np.abs(got - (1e6 - 1) * part)) / np.max(np.abs(1e6 * part))
        worst = max(worst, err)
        glms_ok &= err < 1e-9
    checks = [
        (f"G-Sign update bit-identical for {tested} observed entries scaled by 1e6", bool(sign_ok and tested)),
        (f"GNS update bit-identical for {tested} observed entries scaled by 1e6", bool(gns_ok and tested)),
        (f"GLMS dependence on the entry scales by 1e6 (worst rel err {worst:.1e})", bool(glms_ok)),
    ]
    _pending.append(f"    note: {skipped} entries whose residual sign flips are excluded")
    assert report("7", "impulse robustness", checks)


def test_c8_cli_determinism(tmp_path):
    outs = []
    for d in ("a", "b"):
        out = tmp_path / d
        assert cli.main(["run", "--runs", "5", "--seed", "7", "--out", str(out)]) == 0
        outs.append(out)
    names = ("metrics.csv", "summary.csv", "steady_state.csv", "metadata.json")
    same = [(outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names]
    for d in ("c", "d"):
        assert cli.main(["gen-data", "--seed", "3", "--out", str(tmp_path / d)]) == 0
    same_data = (tmp_path / "c" / "dataset.csv").read_bytes() == (tmp_path / "d" / "dataset.csv").read_bytes()
    checks = [
        ("run at desk scale (5 runs, seed 7) twice: " + ", ".join(f"{n} identical={s}" for n, s in zip(names, same)),
         all(same)),
        ("gen-data twice: dataset.csv identical", same_data),
    ]
    assert report("8", "CLI determinism", checks)
