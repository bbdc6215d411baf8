"""Optimizer building blocks against brute-force and closed-form oracles.

Single-antenna / single-user layouts collapse both conic subproblems to
one-dimensional searches, so a dense grid plus local refinement gives an
independent optimum to compare against. The staged discrete search is
checked against full joint enumeration on a two-element surface.
"""

import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from conftest import desk_config, make_channel
from greenris import (
    DemandProfile,
    InfeasibleConfigurationError,
    MonotonicityError,
    OptimizerConfig,
    StageRecord,
    average_rate,
    build_codebook,
    build_error_stats,
    complexity_report,
    feasibility_report,
    initialize_state,
    iree,
    normalized_distance,
    optimize,
    phase_only_codebook,
    project_to_codebook,
    qos,
    ris_emitted_power,
    total_power,
    write_trace,
)
from greenris.linkmodel import BeamformerState
from greenris.optimizer import (
    _assert_monotone_g,
    _refresh,
    _surface_surrogate,
    build_surface_step_data,
    efficiency_ratio_weight,
    enforce_surface_power,
    exhaustive_surface_search,
    quadratic_transform_value,
    quantize_surface,
    sinr_ratio_weight,
    solve_beam_subproblem,
    solve_surface_subproblem,
    surface_point_terms,
)


def golden_max(fn, lo, hi):
    res = minimize_scalar(lambda x: -fn(x), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x), float(fn(res.x))


def grid_refine_max(fn, lo, hi, n=4001):
    """Dense scan plus bounded refinement around the best cell."""
    xs = np.linspace(lo, hi, n)
    vals = np.array([fn(x) for x in xs])
    i = int(np.argmax(vals))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, n - 1)]
    _, best = golden_max(fn, a, b)
    return max(best, float(vals[i]))


# -- codebooks --------------------------------------------------------------


def test_codebook_one_bit_each():
    cb = build_codebook(1, 1, 2.0)
    np.testing.assert_allclose(cb.entries, [1.0, -1.0, 2.0, -2.0], atol=1e-12)
    assert cb.n_phase == 2
    assert cb.amplitude_level(0) == 0
    assert cb.amplitude_level(3) == 1
    assert cb.step_down(2) == 0          # same phase, lower amplitude
    assert cb.step_down(0) is None


def test_codebook_levels_uniform():
    cb = build_codebook(2, 2, 8.0)
    assert len(cb.entries) == 16
    amps = np.unique(np.round(np.abs(cb.entries), 12))
    np.testing.assert_allclose(amps, [2.0, 4.0, 6.0, 8.0], atol=1e-12)
    # amplitude-major layout: first block carries the smallest amplitude
    np.testing.assert_allclose(np.abs(cb.entries[:4]), 2.0, atol=1e-12)


def test_phase_only_codebook():
    cb = phase_only_codebook(2)
    np.testing.assert_allclose(cb.entries, [1.0, 1j, -1.0, -1j], atol=1e-12)
    assert cb.a_bits == 0
    assert cb.step_down(1) is None       # single amplitude level


def test_codebook_validation():
    with pytest.raises(ValueError):
        build_codebook(0, 1, 2.0)
    with pytest.raises(ValueError):
        build_codebook(1, 0, 2.0)
    with pytest.raises(ValueError):
        build_codebook(1, 1, 0.0)
    with pytest.raises(ValueError):
        phase_only_codebook(0)


def test_projection_properties():
    cb = build_codebook(1, 1, 2.0)
    theta = np.array([0.9 + 0.1j, -1.7, 0.2j, 2.5])
    proj, idx = project_to_codebook(theta, cb)
    np.testing.assert_array_equal(proj, cb.entries[idx])
    # idempotent
    again, idx2 = project_to_codebook(proj, cb)
    np.testing.assert_array_equal(again, proj)
    np.testing.assert_array_equal(idx2, idx)
    # every projected entry is the true per-element nearest neighbour
    for t, p in zip(theta, proj):
        dists = np.abs(t - cb.entries)
        assert abs(t - p) == pytest.approx(dists.min(), rel=1e-12)
    # ties resolve to the smaller index: 0 is equidistant from +1 and -1
    _, tie = project_to_codebook(np.array([0.0 + 0.0j]), cb)
    assert tie[0] == 0


def test_normalized_distance():
    cb = build_codebook(1, 1, 2.0)
    theta = np.array([1.2 + 0.0j, 0.0 + 0.0j])
    rounded, _ = project_to_codebook(theta, cb)
    d = normalized_distance(rounded, theta)
    assert d[0] == pytest.approx(0.2 / 1.2, rel=1e-12)
    assert d[1] == np.inf                # rounded away from an exact zero
    assert normalized_distance(np.zeros(1), np.zeros(1))[0] == 0.0


# -- closed-form auxiliaries ------------------------------------------------


def test_outer_weight_matches_golden_section():
    rng = np.random.default_rng(0)
    for _ in range(60):
        s = float(rng.uniform(0.01, 20.0))
        p = float(rng.uniform(0.5, 30.0))
        closed = math.sqrt(s) / p
        x, _ = golden_max(lambda y: 2.0 * y * math.sqrt(s) - y * y * p,
                          0.0, 4.0 * closed + 1.0)
        assert abs(closed - x) <= 1e-6


def test_inner_weight_matches_golden_section():
    rng = np.random.default_rng(1)
    for _ in range(60):
        re = float(rng.uniform(0.01, 10.0))
        v = float(rng.uniform(0.2, 15.0))
        closed = sinr_ratio_weight(re, v)
        x, _ = golden_max(lambda z: 2.0 * z * re - z * z * v,
                          0.0, 4.0 * closed + 1.0)
        assert abs(closed - x) <= 1e-6
    with pytest.raises(ValueError):
        sinr_ratio_weight(1.0, 0.0)


def test_transform_identity():
    rng = np.random.default_rng(2)
    for _ in range(200):
        u = rng.uniform(0.01, 6.0, size=4)
        p = float(rng.uniform(0.5, 40.0))
        y = math.sqrt(u.sum()) / p
        ratio = u.sum() / p
        assert quadratic_transform_value(u, y, p) == pytest.approx(
            ratio, rel=1e-12)


def test_efficiency_ratio_weight_uses_full_power():
    cfg = desk_config()
    chan = make_channel(3, cfg)
    cb = build_codebook(2, 2, cfg.alpha_max)
    state, _ = initialize_state(np.random.default_rng(4), chan, cfg, cb)
    u = np.array([1.0, 2.0, 0.5])
    y = efficiency_ratio_weight(u, chan, state, cfg, 2)
    assert y == pytest.approx(
        math.sqrt(u.sum()) / total_power(chan, state, cfg, 2), rel=1e-12)


# -- subproblem oracles -----------------------------------------------------


def scalar_beam_setup(seed):
    cfg = desk_config(n_tx=1, n_users=1, n_ris=6)
    chan = make_channel(seed, cfg)
    cb = build_codebook(2, 2, cfg.alpha_max)
    state, _ = initialize_state(np.random.default_rng(seed + 1), chan, cfg, cb)
    stats = build_error_stats(chan, cfg.rho)
    return cfg, chan, cb, state, stats


@pytest.mark.parametrize("seed,demand", [(10, 1e9), (11, 1e9), (12, 2e7)])
def test_beam_subproblem_scalar_oracle(seed, demand):
    """n_tx = K = 1 collapses the beam step to a line search over |w|."""
    cfg, chan, cb, state, stats = scalar_beam_setup(seed)
    ocfg = OptimizerConfig()
    bits = 4
    d_int = np.array([demand / cfg.bandwidth_hz])
    zeros = np.zeros(1)
    data = build_surface_step_data(chan, stats, state.w, cfg)
    aux = _refresh(data, state.theta, d_int, cfg, ocfg, bits)

    w_new, _, _, rep, _ = solve_beam_subproblem(
        chan, stats, state.theta, aux.y, aux.z, d_int, zeros, cfg, ocfg, bits)
    assert rep.status == "optimal"

    # longhand scalar model of the same program
    noise = cfg.noise_user_w
    sn = math.sqrt(noise)
    theta = state.theta
    th_h = theta[:, None] * chan.h_bs_ris            # (N, 1)
    r = complex((stats.rho * (chan.h_ru_est[0].conj() * theta)
                 @ chan.h_bs_ris / sn)[0])
    own2 = (stats.q_self[0] / sn) ** 2 * float(np.linalg.norm(th_h) ** 2)
    g = stats.factors[0]
    col = np.sqrt(np.sum(np.abs(g) ** 2, axis=0))
    amp2 = cfg.noise_ris_w * float(np.linalg.norm(col * theta) ** 2) / noise
    thh2 = float(np.linalg.norm(th_h) ** 2)
    ris_noise = cfg.noise_ris_w * float(np.linalg.norm(theta) ** 2)
    static = cfg.p_bs_static_w + cfg.p_ris_static_w \
        + cfg.n_ris * cfg.element_power_w(bits)
    y, z, d = aux.y, float(aux.z[0]), float(d_int[0])

    def f(x):
        v = 1.0 + own2 * x * x + amp2
        q = 2.0 * z * abs(r) * x - z * z * v
        if q < 0.0:
            return -np.inf
        u = min(d, math.log2(1.0 + q))
        power = cfg.mu_bs * x * x + cfg.mu_ris * (thh2 * x * x + ris_noise) + static
        return 2.0 * y * math.sqrt(u) - y * y * power

    x_max = min(math.sqrt(cfg.p_bs_max_w),
                math.sqrt((cfg.p_ris_max_w - ris_noise) / thh2))
    f_star = grid_refine_max(f, 0.0, x_max)

    x_hat = float(np.abs(w_new[0, 0]))
    # solver optimum: aligned phase and the oracle's objective value
    assert abs(r * w_new[0, 0]) == pytest.approx(
        abs(r) * x_hat, rel=1e-6)
    assert f(x_hat) == pytest.approx(f_star, rel=1e-5, abs=1e-8)


@pytest.mark.parametrize("seed", [20, 21])
def test_surface_subproblem_scalar_oracle(seed):
    """N = K = 1 collapses the surface step to a line search over |theta|."""
    cfg = desk_config(n_tx=3, n_users=1, n_ris=1)
    chan = make_channel(seed, cfg)
    cb = build_codebook(2, 2, cfg.alpha_max)
    state, _ = initialize_state(np.random.default_rng(seed + 1), chan, cfg, cb)
    stats = build_error_stats(chan, cfg.rho)
    ocfg = OptimizerConfig()
    bits = 4
    d_int = np.array([10.0])
    zeros = np.zeros(1)
    data = build_surface_step_data(chan, stats, state.w, cfg)
    aux = _refresh(data, state.theta, d_int, cfg, ocfg, bits)

    theta_new, _, _, rep, _ = solve_surface_subproblem(
        data, aux.y, aux.z, d_int, zeros, cfg, ocfg, bits,
        alpha_max=cfg.alpha_max, fixed={})
    assert rep.status == "optimal"

    noise = cfg.noise_user_w
    sn = math.sqrt(noise)
    s0 = complex(data.sig_rows[0, 0])
    c2 = (abs(complex(data.cross[0][0][0, 0])) ** 2
          + float(data.amp_rows[0, 0]) ** 2) / noise
    o2 = abs(complex(data.out_rows[0, 0])) ** 2
    static = data.bs_power_w + cfg.p_ris_static_w + cfg.element_power_w(bits)
    y, z, d = aux.y, float(aux.z[0]), float(d_int[0])

    def f(x):
        v = 1.0 + c2 * x * x
        q = 2.0 * z * abs(s0) * x / sn - z * z * v
        if q < 0.0:
            return -np.inf
        u = min(d, math.log2(1.0 + q))
        power = cfg.mu_ris * (o2 + cfg.noise_ris_w) * x * x + static
        return 2.0 * y * math.sqrt(u) - y * y * power

    x_max = min(cfg.alpha_max,
                math.sqrt(cfg.p_ris_max_w / (o2 + cfg.noise_ris_w)))
    f_star = grid_refine_max(f, 0.0, x_max)

    x_hat = float(np.abs(theta_new[0]))
    assert abs(s0 * theta_new[0]) == pytest.approx(abs(s0) * x_hat, rel=1e-6)
    assert f(x_hat) == pytest.approx(f_star, rel=1e-5, abs=1e-8)


# -- staged quantization ----------------------------------------------------


def small_surface_setup(seed, n_ris=2, a_bits=1, b_bits=1):
    cfg = desk_config(n_tx=4, n_users=2, n_ris=n_ris)
    chan = make_channel(seed, cfg)
    cb = build_codebook(a_bits, b_bits, cfg.alpha_max)
    state, idx = initialize_state(np.random.default_rng(seed + 50), chan, cfg, cb)
    stats = build_error_stats(chan, cfg.rho)
    ocfg = OptimizerConfig(amplitude_bits=a_bits, phase_bits=b_bits)
    bits = a_bits + b_bits
    d_int = np.array([0.6, 0.4])
    data = build_surface_step_data(chan, stats, state.w, cfg)
    aux = _refresh(data, state.theta, d_int, cfg, ocfg, bits)
    return cfg, cb, ocfg, bits, d_int, data, aux, state, idx


@pytest.mark.parametrize("seed", [30, 31, 32, 33, 34, 35])
def test_staged_search_near_exhaustive(seed):
    cfg, cb, ocfg, bits, d_int, data, aux, state, idx = small_surface_setup(seed)
    zeros = np.zeros(2)
    _, _, g_alg, _ = quantize_surface(
        data, state.theta, idx, cb, aux.y, aux.z, d_int, zeros, cfg, ocfg, bits)
    g_best, theta_best = exhaustive_surface_search(
        data, cb, aux.y, aux.z, d_int, cfg, ocfg, bits)
    assert g_best > 0
    assert g_alg >= 0.95 * g_best
    # the enumeration winner respects the emitted-power cap
    _, _, emitted = surface_point_terms(data, theta_best, cfg)
    assert emitted <= cfg.p_ris_max_w * (1.0 + 1e-9)


def test_single_round_reduces_to_projection():
    """One round with no polish is exactly solve-project-cap, or the incumbent."""
    cfg, cb, ocfg, bits, d_int, data, aux, state, idx = small_surface_setup(40)
    red = OptimizerConfig(q_rounds=1, polish_sweeps=0,
                          amplitude_bits=cb.a_bits, phase_bits=cb.b_bits)
    zeros = np.zeros(2)
    incumbent = cb.entries[np.zeros(2, dtype=int)]
    inc_idx = np.zeros(2, dtype=int)
    g_inc, _, _ = _surface_surrogate(data, incumbent, aux.y, aux.z, d_int,
                                     cfg, red, bits)

    theta_c, _, _, _, _ = solve_surface_subproblem(
        data, aux.y, aux.z, d_int, zeros, cfg, red, bits,
        alpha_max=cb.alpha_max, fixed={})
    theta_q, idx_q = project_to_codebook(theta_c, cb)
    theta_q, idx_q = enforce_surface_power(theta_q, idx_q, data, cb, cfg)
    g_q, _, _ = _surface_surrogate(data, theta_q, aux.y, aux.z, d_int,
                                   cfg, red, bits)

    got_theta, got_idx, got_g, trace = quantize_surface(
        data, incumbent, inc_idx, cb, aux.y, aux.z, d_int, zeros,
        cfg, red, bits)
    assert len(trace) == 1
    if g_q > g_inc:
        np.testing.assert_array_equal(got_theta, theta_q)
        np.testing.assert_array_equal(got_idx, idx_q)
        assert got_g == pytest.approx(g_q, rel=1e-12)
    else:
        np.testing.assert_array_equal(got_theta, incumbent)


def test_polish_never_hurts():
    for seed in (41, 42):
        cfg, cb, ocfg, bits, d_int, data, aux, state, idx = small_surface_setup(
            seed, n_ris=3)
        zeros = np.zeros(2)
        plain = OptimizerConfig(polish_sweeps=0, amplitude_bits=1, phase_bits=1)
        polished = OptimizerConfig(polish_sweeps=2, amplitude_bits=1, phase_bits=1)
        _, _, g0, _ = quantize_surface(data, state.theta, idx, cb, aux.y, aux.z,
                                       d_int, zeros, cfg, plain, bits)
        _, _, g1, _ = quantize_surface(data, state.theta, idx, cb, aux.y, aux.z,
                                       d_int, zeros, cfg, polished, bits)
        assert g1 >= g0 - 1e-12


def test_enforce_surface_power_steps_down():
    cfg, cb, ocfg, bits, d_int, data, aux, state, idx = small_surface_setup(43)
    chan = make_channel(43, cfg)
    stats = build_error_stats(chan, cfg.rho)
    top = np.full(2, len(cb.entries) - 1)
    theta_top = cb.entries[top]
    # scale the beams so the top amplitude level violates the cap but the
    # bottom level (amplitudes halved, emitted power quartered) does not
    probe = build_surface_step_data(chan, stats, state.w, cfg)
    _, _, base = surface_point_terms(probe, theta_top, cfg)
    scale = math.sqrt(2.5 * cfg.p_ris_max_w / base)
    data_big = build_surface_step_data(chan, stats, scale * state.w, cfg)
    _, _, emitted0 = surface_point_terms(data_big, theta_top, cfg)
    assert emitted0 > cfg.p_ris_max_w
    theta_ok, idx_ok = enforce_surface_power(theta_top, top, data_big, cb, cfg)
    _, _, emitted1 = surface_point_terms(data_big, theta_ok, cfg)
    assert emitted1 <= cfg.p_ris_max_w * (1.0 + 1e-12)
    # phases survive, only amplitude levels move
    np.testing.assert_array_equal(idx_ok % cb.n_phase, top % cb.n_phase)
    assert np.all(idx_ok <= top)

    tiny = cfg.scaled(p_all_max_dbm=-40.0)
    with pytest.raises(InfeasibleConfigurationError):
        enforce_surface_power(theta_top, top.copy(), data_big, cb, tiny)


def test_exhaustive_search_guard():
    cfg, cb, ocfg, bits, d_int, data, aux, state, idx = small_surface_setup(
        44, n_ris=2, a_bits=4, b_bits=4)   # 256^2 fine, bump via fake n below
    big_cb = build_codebook(4, 4, cfg.alpha_max)
    cfg_big = desk_config(n_tx=4, n_users=2, n_ris=4)
    chan = make_channel(44, cfg_big)
    stats = build_error_stats(chan, cfg_big.rho)
    st, _ = initialize_state(np.random.default_rng(1), chan, cfg_big, big_cb)
    data_big = build_surface_step_data(chan, stats, st.w, cfg_big)
    with pytest.raises(ValueError):
        exhaustive_surface_search(data_big, big_cb, 0.1, np.ones(2),
                                  np.ones(2), cfg_big, ocfg, bits)


# -- initialization ---------------------------------------------------------


def test_initialize_state_feasible():
    cfg = desk_config()
    cb = build_codebook(2, 2, cfg.alpha_max)
    for seed in range(10):
        chan = make_channel(seed, cfg)
        state, idx = initialize_state(np.random.default_rng(seed), chan, cfg, cb)
        assert ris_emitted_power(chan, state, cfg) <= cfg.p_ris_max_w * (1 + 1e-12)
        assert float(np.sum(np.abs(state.w) ** 2)) <= cfg.p_bs_max_w * (1 + 1e-12)
        np.testing.assert_array_equal(state.theta, cb.entries[idx])


def test_initialize_state_deterministic():
    cfg = desk_config()
    cb = build_codebook(2, 2, cfg.alpha_max)
    chan = make_channel(3, cfg)
    s1, i1 = initialize_state(np.random.default_rng(9), chan, cfg, cb)
    s2, i2 = initialize_state(np.random.default_rng(9), chan, cfg, cb)
    np.testing.assert_array_equal(s1.w, s2.w)
    np.testing.assert_array_equal(i1, i2)


# -- full runs --------------------------------------------------------------


def run_profile(cfg, seed):
    rng = np.random.default_rng(seed)
    demands = rng.uniform(4e7, 8e7, size=cfg.n_users)
    return DemandProfile(demands=demands,
                         c_min=np.minimum(0.1 * demands, 1e6))


def recheck_monotone(history, tol_gap=1e-8):
    for prev, nxt in zip(history, history[1:]):
        if nxt.restoration:
            continue
        tol = 10.0 * max(prev.gap, nxt.gap, tol_gap * max(1.0, abs(prev.g)))
        assert nxt.g >= prev.g - tol, (prev, nxt)


def test_optimize_discrete_end_to_end(cfg_small):
    chan = make_channel(60, cfg_small)
    profile = run_profile(cfg_small, 61)
    res = optimize(chan, profile, cfg_small, OptimizerConfig(),
                   rng=np.random.default_rng(62))
    assert res.converged
    assert len(res.history) == 4 * res.n_outer
    assert [r.stage for r in res.history[:4]] == \
        ["refresh", "surface", "refresh", "beam"]
    recheck_monotone(res.history)

    stats = build_error_stats(chan, cfg_small.rho)
    rates = average_rate(chan, stats, res.state, cfg_small)
    np.testing.assert_allclose(res.rates, rates, rtol=1e-12)
    power = total_power(chan, res.state, cfg_small, res.phase_bits)
    assert res.eta == pytest.approx(
        iree(rates, profile.demands, power), rel=1e-12)
    assert res.qos_value == pytest.approx(qos(rates, profile.demands), rel=1e-12)
    assert res.power.total == pytest.approx(power, rel=1e-12)

    cb = build_codebook(2, 2, cfg_small.alpha_max)
    proj, _ = project_to_codebook(res.state.theta, cb)
    np.testing.assert_allclose(proj, res.state.theta, atol=1e-12)
    np.testing.assert_array_equal(cb.entries[res.theta_indices], res.state.theta)

    rep = feasibility_report(chan, res.state, cfg_small, cb)
    assert min(rep.values()) >= -1e-6
    assert len(res.eta_trace) == res.n_outer
    assert res.eta_trace[-1] == pytest.approx(res.eta, rel=1e-9)
    # hard floors hold at the final point
    assert np.all(rates >= profile.c_min * (1 - 1e-6) - 1.0)


def test_optimize_continuous_mode(cfg_small):
    chan = make_channel(63, cfg_small)
    profile = run_profile(cfg_small, 64)
    res = optimize(chan, profile, cfg_small,
                   OptimizerConfig(continuous_surface=True),
                   rng=np.random.default_rng(65))
    assert res.theta_indices is None
    assert np.max(np.abs(res.state.theta)) <= cfg_small.alpha_max * (1 + 1e-8)
    recheck_monotone(res.history)
    rep = feasibility_report(chan, res.state, cfg_small)
    assert "codebook" not in rep
    assert min(rep.values()) >= -1e-6


def test_optimize_passive_surface():
    cfg = desk_config(ris_active=False, n_ris=12)
    chan = make_channel(66, cfg)
    profile = run_profile(cfg, 67)
    res = optimize(chan, profile, cfg, OptimizerConfig(),
                   rng=np.random.default_rng(68))
    np.testing.assert_allclose(np.abs(res.state.theta), 1.0, atol=1e-12)
    # passive bill has no per-element DC draw
    assert res.power.ris_elements == pytest.approx(
        cfg.n_ris * 1.5e-3 * res.phase_bits, rel=1e-12)
    recheck_monotone(res.history)


def test_optimize_infeasible_floors(cfg_small):
    cfg = cfg_small.scaled(p_all_max_dbm=-20.0)
    chan = make_channel(69, cfg)
    demands = np.full(cfg.n_users, 8e8)
    profile = DemandProfile(demands=demands, c_min=demands.copy())
    with pytest.raises(InfeasibleConfigurationError):
        optimize(chan, profile, cfg, OptimizerConfig(),
                 rng=np.random.default_rng(70))


def test_optimize_rejects_mismatched_profile(cfg_small):
    chan = make_channel(71, cfg_small)
    profile = DemandProfile(demands=np.array([1e7]), c_min=np.array([0.0]))
    with pytest.raises(ValueError):
        optimize(chan, profile, cfg_small)


# -- trace plumbing ---------------------------------------------------------


def rec(g, gap=0.0, restoration=False):
    return StageRecord(iteration=1, stage="beam", g=g, eta=0.0, solve_ms=0.0,
                       status="optimal", gap=gap, restoration=restoration)


def test_monotone_assertion():
    _assert_monotone_g([rec(1.0), rec(1.5), rec(1.5)], OptimizerConfig())
    with pytest.raises(MonotonicityError):
        _assert_monotone_g([rec(1.0), rec(0.5)], OptimizerConfig())
    # a drop inside ten solver gaps is tolerated
    _assert_monotone_g([rec(1.0, gap=0.01), rec(0.95, gap=0.01)],
                       OptimizerConfig())
    # restoration restarts the chain
    _assert_monotone_g([rec(1.0), rec(0.1, restoration=True), rec(0.2)],
                       OptimizerConfig())


def test_write_trace(tmp_path, cfg_small):
    chan = make_channel(72, cfg_small)
    profile = run_profile(cfg_small, 73)
    res = optimize(chan, profile, cfg_small, OptimizerConfig(max_outer=2,
                                                            epsilon=1e-3),
                   rng=np.random.default_rng(74))
    path = tmp_path / "trace.csv"
    write_trace(res, str(path))
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "iter,g,eta,step,solve_ms,status"
    assert len(lines) == 1 + len(res.history)


def test_feasibility_report_flags_violations(cfg_small):
    chan = make_channel(75, cfg_small)
    w = np.full((cfg_small.n_tx, cfg_small.n_users), 2.0, dtype=complex)
    state = BeamformerState(w=w, theta=np.ones(cfg_small.n_ris))
    rep = feasibility_report(chan, state, cfg_small)
    assert rep["bs_power"] < 0           # 2^2 x 12 entries >> 0.99 W
    assert rep["modulus"] > 0


def test_complexity_report(cfg_small):
    chan = make_channel(76, cfg_small)
    profile = run_profile(cfg_small, 77)
    ocfg = OptimizerConfig(max_outer=3, epsilon=1e-9)
    res = optimize(chan, profile, cfg_small, ocfg,
                   rng=np.random.default_rng(78))
    crep = complexity_report(res, cfg_small, ocfg)
    k, n_t, n = cfg_small.n_users, cfg_small.n_tx, cfg_small.n_ris
    assert crep.predicted_beam == (n_t * k + 3 * k) ** 2 * (5 * k + 2)
    assert crep.predicted_surface == (n + 3 * k) ** 2 * (5 * k + n + 1)
    want_total = crep.outer_iterations * (
        crep.predicted_beam + ocfg.q_rounds * crep.predicted_surface
        + ocfg.q_rounds * n * math.log2(1.0 + n))
    assert crep.predicted_total == pytest.approx(want_total, rel=1e-12)
    assert crep.outer_iterations == res.n_outer
    assert crep.beam_vars == res.beam_dims[0]
    assert crep.surface_constraints == res.surface_dims[1]


def test_optimizer_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        OptimizerConfig(q_rounds=0)
    with pytest.raises(ValueError):
        OptimizerConfig(objective="sum-rate")
