"""Experiment harness tests.

Oracles: the Monte Carlo aggregator is checked against scheduling
invariants (worker count, chunk merging, repeated seeds), the theory
path against hand-assembled first rows and a stage-splitting identity,
and the export layer against exact round trips.  A small end-to-end
experiment ties simulation and prediction together at loose tolerance.
"""

import json

import numpy as np
import pytest

from diffcomb.combine import CombinerConfig
from diffcomb.diffusion import StrategyConfig, atc_config
from diffcomb.graph import Topology, build_preset, static_rule
from diffcomb.harness import (
    AggregateResult,
    ConfigError,
    ExperimentConfig,
    _resolve_workers,
    compare,
    config_from_dict,
    export,
    export_csv,
    export_json,
    load_config,
    load_preset_config,
    load_result,
    merge_aggregates,
    preset_names,
    resolve_config,
    run_monte_carlo,
    run_theory,
    series_names,
)
from diffcomb.signal import (
    AgentSignalParams,
    TargetSchedule,
    load_snr_preset,
    regressor_covariance,
)

CHAIN4 = Topology(
    n_agents=4,
    adjacency=np.array([
        [0, 1, 0, 0],
        [1, 0, 1, 0],
        [0, 1, 0, 1],
        [0, 0, 1, 0],
    ], dtype=bool),
)

TARGETS4 = np.array([
    [0.8, -0.3],
    [0.5, 0.9],
    [-0.2, 0.4],
    [1.1, -0.6],
])


def chain_params(filter_len=2):
    return [
        AgentSignalParams(sigma_x2=1.0 + 0.1 * k, sigma_z2=0.04 + 0.01 * k,
                          filter_len=filter_len)
        for k in range(4)
    ]


def small_config(scheme="power_normalized", nu=0.01, mu=0.05, horizon=40,
                 runs=6, seed=11, schedule=None, gamma_init=None):
    comp1 = atc_config(CHAIN4, static_rule(CHAIN4, "identity"), mu)
    comp2 = atc_config(CHAIN4, static_rule(CHAIN4, "averaging"), mu)
    return ExperimentConfig(
        topology=CHAIN4,
        signal_params=chain_params(),
        schedule=schedule or TargetSchedule.constant(TARGETS4),
        components=[comp1, comp2],
        combiner=CombinerConfig(scheme=scheme, nu_gamma=nu),
        horizon=horizon,
        runs=runs,
        seed=seed,
        gamma_init=gamma_init,
    )


def multi_config(horizon=30, runs=4):
    comps = [
        atc_config(CHAIN4, static_rule(CHAIN4, rule), mu)
        for rule, mu in (("identity", 0.04), ("averaging", 0.08),
                         ("metropolis", 0.02))
    ]
    combiner = CombinerConfig(scheme="multi_sign", nu_gamma=0.01,
                              nu_alpha=0.1, delta=0.01, m=3)
    return ExperimentConfig(
        topology=CHAIN4, signal_params=chain_params(),
        schedule=TargetSchedule.constant(TARGETS4),
        components=comps, combiner=combiner,
        horizon=horizon, runs=runs, seed=3,
    )


def raw_config(**overrides):
    raw = {
        "topology": {"preset": "net1"},
        "signal": {"snr_preset": {"level": "snr1", "kind": "white"}},
        "components": [
            {"a2": "identity", "mu": 0.05},
            {"a2": "averaging", "mu": 0.05},
        ],
        "combiner": {"scheme": "power_normalized", "nu_gamma": 0.01},
        "horizon": 30,
        "runs": 3,
        "seed": 5,
    }
    raw.update(overrides)
    return raw


class TestExperimentConfig:
    def test_accessors(self):
        cfg = small_config()
        assert cfg.n_agents == 4
        assert cfg.filter_len == 2
        assert cfg.config_hash is None

    @pytest.mark.parametrize("field,value", [
        ("runs", 0), ("horizon", 0),
    ])
    def test_rejects_nonpositive_counts(self, field, value):
        with pytest.raises(ValueError):
            small_config(**{field: value})

    def test_rejects_single_component(self):
        cfg = small_config()
        with pytest.raises(ValueError, match="two component"):
            ExperimentConfig(
                topology=cfg.topology, signal_params=cfg.signal_params,
                schedule=cfg.schedule, components=cfg.components[:1],
                combiner=cfg.combiner, horizon=10, runs=1, seed=0)

    def test_rejects_component_count_mismatch_for_multi(self):
        cfg = multi_config()
        with pytest.raises(ValueError, match="expects 3"):
            ExperimentConfig(
                topology=cfg.topology, signal_params=cfg.signal_params,
                schedule=cfg.schedule, components=cfg.components[:2],
                combiner=cfg.combiner, horizon=10, runs=1, seed=0)

    def test_rejects_schedule_shape_mismatch(self):
        with pytest.raises(ValueError, match="schedule"):
            small_config(schedule=TargetSchedule.constant(np.zeros((5, 2))))

    def test_rejects_late_first_stage(self):
        late = TargetSchedule(stages=((3, TARGETS4),))
        with pytest.raises(ValueError, match="time 0"):
            small_config(schedule=late)

    def test_rejects_gamma_init_for_multi(self):
        cfg = multi_config()
        with pytest.raises(ValueError, match="gamma_init"):
            ExperimentConfig(
                topology=cfg.topology, signal_params=cfg.signal_params,
                schedule=cfg.schedule, components=cfg.components,
                combiner=cfg.combiner, horizon=10, runs=1, seed=0,
                gamma_init=0.8)

    def test_rejects_foreign_component_topology(self):
        other = build_preset("net1")
        comp = atc_config(other, static_rule(other, "identity"), 0.05)
        cfg = small_config()
        with pytest.raises(ValueError):
            ExperimentConfig(
                topology=CHAIN4, signal_params=cfg.signal_params,
                schedule=cfg.schedule, components=[comp, comp],
                combiner=cfg.combiner, horizon=10, runs=1, seed=0)


class TestConfigFromDict:
    def test_full_build(self):
        cfg = config_from_dict(raw_config())
        assert cfg.n_agents == 10
        assert cfg.filter_len == 2
        assert cfg.horizon == 30
        assert cfg.combiner.scheme == "power_normalized"
        assert len(cfg.config_hash) == 16

    def test_hash_ignores_key_order(self):
        raw = raw_config()
        flipped = dict(reversed(list(raw.items())))
        assert (config_from_dict(raw).config_hash
                == config_from_dict(flipped).config_hash)

    def test_hash_tracks_content(self):
        a = config_from_dict(raw_config())
        b = config_from_dict(raw_config(seed=6))
        assert a.config_hash != b.config_hash

    def test_snr_preset_supplies_targets(self):
        cfg = config_from_dict(raw_config())
        _, w_star = load_snr_preset(10, "snr1", "white")
        np.testing.assert_array_equal(cfg.schedule.stages[0][1],
                                      np.tile(w_star, (10, 1)))

    def test_explicit_agents_and_stages(self):
        raw = raw_config(
            signal={"agents": {"sigma_x2": 1.0, "sigma_z2": 0.1,
                               "filter_len": 2}},
            targets={"stages": [
                {"start": 0, "targets": np.ones((10, 2)).tolist()},
                {"start": 20, "targets": (2 * np.ones((10, 2))).tolist()},
            ], "transition_len": 5},
        )
        cfg = config_from_dict(raw)
        assert len(cfg.schedule.stages) == 2
        assert cfg.schedule.transition_len == 5
        assert all(p.sigma_x2 == 1.0 for p in cfg.signal_params)

    def test_explicit_targets_required_without_preset(self):
        raw = raw_config(signal={"agents": {"sigma_x2": 1.0, "sigma_z2": 0.1,
                                            "filter_len": 2}})
        with pytest.raises(ConfigError, match="targets"):
            config_from_dict(raw)

    @pytest.mark.parametrize("mutate,message", [
        (lambda r: r.update(extra=1), "unknown keys"),
        (lambda r: r.pop("combiner"), "missing 'combiner'"),
        (lambda r: r.pop("seed"), "missing 'seed'"),
        (lambda r: r["components"][0].pop("mu"), "missing 'mu'"),
        (lambda r: r["components"][0].update(bad=1), "unknown keys"),
        (lambda r: r.update(topology={"preset": "net9"}), "net9"),
        (lambda r: r.update(topology={}), "preset name or an edge-list"),
        (lambda r: r.update(signal={}), "snr_preset or explicit"),
        (lambda r: r["combiner"].update(winding=2), "combiner"),
        (lambda r: r["components"][0].update(a2="spiral"), "spiral"),
        (lambda r: r.update(components="averaging"), "must be a list"),
    ])
    def test_structural_errors(self, mutate, message):
        raw = raw_config()
        mutate(raw)
        with pytest.raises(ConfigError, match=message):
            config_from_dict(raw)

    def test_agent_count_mismatch(self):
        raw = raw_config(signal={"agents": [
            {"sigma_x2": 1.0, "sigma_z2": 0.1, "filter_len": 2}] * 7})
        with pytest.raises(ConfigError, match="7 agents"):
            config_from_dict(raw)

    def test_adaptive_mode_rejects_static_a2(self):
        raw = raw_config()
        raw["components"][0] = {"a2_mode": "adaptive_projection",
                                "a2": "averaging", "mu": 0.05}
        with pytest.raises(ConfigError, match="static a2"):
            config_from_dict(raw)

    def test_adaptive_mode_builds(self):
        raw = raw_config()
        raw["components"][0] = {"a2_mode": "adaptive_projection", "mu": 0.05}
        raw["components"][1] = {"a2_mode": "adaptive_relative_variance",
                                "tau": 0.1, "mu": 0.05}
        cfg = config_from_dict(raw)
        assert cfg.components[0].a2 is None
        np.testing.assert_array_equal(cfg.components[1].tau, np.full(10, 0.1))

    def test_semantic_errors_stay_value_errors(self):
        raw = raw_config()
        raw["components"][0]["mu"] = -0.1
        with pytest.raises(ValueError) as excinfo:
            config_from_dict(raw)
        assert not isinstance(excinfo.value, ConfigError)

    def test_config_error_is_not_value_error(self):
        assert not issubclass(ConfigError, ValueError)


class TestConfigFiles:
    def test_load_config_round_trip(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(raw_config()))
        cfg = load_config(path)
        assert cfg.n_agents == 10
        assert cfg.config_hash == config_from_dict(raw_config()).config_hash

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.json")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_non_object_json(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="setting table"):
            load_config(path)

    def test_edge_list_relative_to_config(self, tmp_path):
        (tmp_path / "ring.edges").write_text("1 2\n2 3\n3 4\n4 1\n")
        raw = raw_config(
            topology={"edges": "ring.edges"},
            signal={"agents": {"sigma_x2": 1.0, "sigma_z2": 0.1,
                               "filter_len": 2}},
            targets={"constant": np.zeros((4, 2)).tolist()},
        )
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(raw))
        assert load_config(path).n_agents == 4

    def test_missing_edge_file(self, tmp_path):
        raw = raw_config(topology={"edges": "ghost.edges"})
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(raw))
        with pytest.raises(ConfigError, match="ghost.edges"):
            load_config(path)

    def test_resolve_prefers_files(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(raw_config()))
        assert resolve_config(str(path)).horizon == 30

    def test_resolve_falls_back_to_presets(self):
        cfg = resolve_config("steady_net1_snr1_white_pn")
        assert cfg.n_agents == 10
        assert cfg.horizon == 5000

    def test_resolve_unknown(self):
        with pytest.raises(ConfigError):
            resolve_config("no/such/file.json")
        with pytest.raises(ConfigError, match="no bundled preset"):
            resolve_config("nonexistent_preset")


class TestBundledPresets:
    def test_expected_presets_exist(self):
        names = set(preset_names())
        assert {"tracking_static_pn", "tracking_static_sr",
                "tracking_adaptive_pn", "tracking_adaptive_sr",
                "steady_net1_snr1_white_slow_pn",
                "steady_net1_snr1_white_slow_sr",
                "steady_net3_snr3_ar1_pn",
                "universality_pn", "universality_sr",
                "universality_fast_pn"} <= names

    def test_every_preset_loads(self):
        for name in preset_names():
            cfg = load_preset_config(name)
            assert cfg.runs == 100
            assert cfg.config_hash is not None

    def test_tracking_schedule_structure(self):
        cfg = load_preset_config("tracking_static_pn")
        starts = [s for s, _ in cfg.schedule.stages]
        assert starts == [0, 1500, 3000, 4500]
        assert cfg.schedule.transition_len == 500
        assert cfg.filter_len == 50
        stage2 = cfg.schedule.stages[1][1]
        assert np.ptp(stage2[:5], axis=0).max() == 0.0
        assert np.ptp(stage2[5:], axis=0).max() == 0.0
        assert not np.array_equal(stage2[0], stage2[5])

    def test_slow_preset_matches_fast_pair(self):
        slow = load_preset_config("steady_net1_snr1_white_slow_pn")
        assert np.all(slow.components[0].mu == 0.002)
        assert slow.combiner.nu_gamma == 0.002
        assert slow.horizon == 20000
        fast = load_preset_config("steady_net1_snr1_white_pn")
        assert np.all(fast.components[0].mu == 0.01)
        assert fast.combiner.nu_gamma == 0.01


class TestWorkerResolution:
    def test_explicit_argument_wins(self, monkeypatch):
        monkeypatch.setenv("DIFFCOMB_WORKERS", "7")
        assert _resolve_workers(2) == 2

    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("DIFFCOMB_WORKERS", "3")
        assert _resolve_workers(None) == 3

    def test_serial_default(self, monkeypatch):
        monkeypatch.delenv("DIFFCOMB_WORKERS", raising=False)
        assert _resolve_workers(None) == 1

    def test_floor_at_one(self):
        assert _resolve_workers(0) == 1


class TestMonteCarlo:
    def test_shapes_and_names(self):
        cfg = small_config()
        result = run_monte_carlo(cfg)
        assert result.runs == cfg.runs
        assert result.n_agents == 4
        assert set(result.series) == set(series_names(cfg))
        for values in result.series.values():
            assert values.shape == (cfg.horizon,)
            assert np.all(np.isfinite(values))
        for name in ("msd_network_1", "msd_network_2", "msd_combined",
                     "emse_network_1", "emse_network_combined"):
            assert np.all(result.series[name] >= 0.0)

    def test_repeat_is_bit_identical(self):
        cfg = small_config()
        a = run_monte_carlo(cfg)
        b = run_monte_carlo(cfg)
        for name in a.series:
            np.testing.assert_array_equal(a.series[name], b.series[name])

    def test_worker_count_does_not_change_results(self):
        cfg = small_config(horizon=25, runs=60)
        serial = run_monte_carlo(cfg, workers=1)
        parallel = run_monte_carlo(cfg, workers=3)
        for name in serial.series:
            np.testing.assert_array_equal(serial.series[name],
                                          parallel.series[name])

    def test_repeated_run_index_degenerates_to_single_run(self):
        # summing two identical runs regroups the floating-point adds,
        # so the halved aggregate matches the single run to rounding
        cfg = small_config()
        once = run_monte_carlo(cfg, run_indices=[4])
        twice = run_monte_carlo(cfg, run_indices=[4, 4])
        assert twice.runs == 2
        for name in once.series:
            np.testing.assert_allclose(once.series[name],
                                       twice.series[name],
                                       rtol=1e-12, atol=1e-14)

    def test_merge_matches_joint_run(self):
        cfg = small_config(runs=8)
        full = run_monte_carlo(cfg)
        parts = [run_monte_carlo(cfg, run_indices=range(0, 4)),
                 run_monte_carlo(cfg, run_indices=range(4, 8))]
        merged = merge_aggregates(parts)
        assert merged.runs == 8
        assert merged.seed == cfg.seed
        for name in full.series:
            np.testing.assert_allclose(merged.series[name],
                                       full.series[name], rtol=1e-13)

    def test_merge_rejects_mismatched_experiments(self):
        a = run_monte_carlo(small_config(horizon=10, runs=2))
        b = run_monte_carlo(small_config(horizon=12, runs=2))
        with pytest.raises(ValueError, match="different experiments"):
            merge_aggregates([a, b])

    def test_empty_run_list_rejected(self):
        with pytest.raises(ValueError, match="at least one run"):
            run_monte_carlo(small_config(), run_indices=[])

    def test_combiner_choice_leaves_components_untouched(self):
        pn = run_monte_carlo(small_config(scheme="power_normalized"))
        sr = run_monte_carlo(small_config(scheme="sign_regressor", nu=0.02))
        for name in ("msd_network_1", "msd_network_2",
                     "emse_network_1", "emse_network_2", "msd_cross",
                     "emse_network_cross"):
            np.testing.assert_array_equal(pn.series[name], sr.series[name])
        assert not np.array_equal(pn.series["gamma_mean_a1"],
                                  sr.series["gamma_mean_a1"])

    def test_frozen_coefficient_pins_combined_to_first_component(self):
        cfg = small_config(nu=0.0, gamma_init=1.0)
        result = run_monte_carlo(cfg)
        np.testing.assert_array_equal(result.series["msd_combined"],
                                      result.series["msd_network_1"])
        np.testing.assert_array_equal(result.series["emse_network_combined"],
                                      result.series["emse_network_1"])
        np.testing.assert_array_equal(result.series["gamma_mean_a2"],
                                      np.ones(cfg.horizon))

    def test_multi_scheme_series(self):
        cfg = multi_config()
        result = run_monte_carlo(cfg)
        assert "msd_cross" not in result.series
        assert "gamma_mean_c3_a4" in result.series
        total = sum(result.series[f"gamma_mean_c{i}_a1"] for i in (1, 2, 3))
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    def test_metadata(self):
        result = run_monte_carlo(small_config())
        meta = result.metadata()
        assert meta["kind"] == "monte_carlo"
        assert meta["runs"] == 6
        assert meta["seed"] == 11


class TestTheoryPath:
    def test_initial_error_row_matches_cold_start(self):
        cfg = small_config()
        result = run_theory(cfg)
        rx = [regressor_covariance(p) for p in cfg.signal_params]
        expected = sum(TARGETS4[k] @ rx[k] @ TARGETS4[k] for k in range(4))
        np.testing.assert_allclose(result.series["emse_network_1"][0],
                                   expected, rtol=1e-12)
        np.testing.assert_allclose(result.series["emse_network_2"][0],
                                   expected, rtol=1e-12)

    def test_first_combined_row_uses_neutral_coefficients(self):
        result = run_theory(small_config())
        e1 = result.series["emse_network_1"][0]
        e2 = result.series["emse_network_2"][0]
        ex = result.series["emse_network_cross"][0]
        np.testing.assert_allclose(
            result.series["emse_network_combined"][0],
            0.25 * e1 + 0.25 * e2 + 0.5 * ex, rtol=1e-12)

    def test_stage_split_is_invisible(self):
        cfg_one = small_config(horizon=40)
        split = TargetSchedule(stages=((0, TARGETS4), (20, TARGETS4)))
        cfg_two = small_config(horizon=40, schedule=split)
        a = run_theory(cfg_one)
        b = run_theory(cfg_two)
        for name in a.series:
            np.testing.assert_array_equal(a.series[name], b.series[name])
        assert len(b.steady) == 2

    def test_target_change_re_excites_deviation(self):
        moved = TargetSchedule(stages=((0, TARGETS4), (60, TARGETS4 + 1.0)))
        result = run_theory(small_config(horizon=120, schedule=moved))
        msd = result.series["msd_combined"]
        assert msd[60] > 2 * msd[59]
        assert msd[119] < msd[60]

    def test_steady_reports_per_stage(self):
        moved = TargetSchedule(stages=((0, TARGETS4), (20, TARGETS4 + 1.0)))
        result = run_theory(small_config(horizon=40, schedule=moved))
        starts = [start for start, _ in result.steady]
        assert starts == [0, 20]
        assert all(report is not None for _, report in result.steady)

    def test_steady_skippable(self):
        result = run_theory(small_config(horizon=10), include_steady=False)
        assert all(report is None for _, report in result.steady)

    def test_multi_scheme_rejected(self):
        with pytest.raises(ValueError, match="two-component"):
            run_theory(multi_config())

    def test_adaptive_fusion_rejected(self):
        cfg = small_config()
        adaptive = StrategyConfig(
            topology=CHAIN4, a1=static_rule(CHAIN4, "identity"),
            c=cfg.components[0].c, mu=0.05, a2_mode="adaptive_projection")
        bad = ExperimentConfig(
            topology=CHAIN4, signal_params=cfg.signal_params,
            schedule=cfg.schedule, components=[adaptive, cfg.components[1]],
            combiner=cfg.combiner, horizon=10, runs=1, seed=0)
        with pytest.raises(ValueError, match="static a2"):
            run_theory(bad)

    def test_simulation_tracks_prediction(self):
        params, w_star = load_snr_preset(10, "snr1", "white")
        topo = build_preset("net1")
        cfg = ExperimentConfig(
            topology=topo, signal_params=params,
            schedule=TargetSchedule.constant(np.tile(w_star, (10, 1))),
            components=[
                atc_config(topo, static_rule(topo, "identity"), 0.05),
                atc_config(topo, static_rule(topo, "averaging"), 0.05),
            ],
            combiner=CombinerConfig(scheme="power_normalized", nu_gamma=0.01),
            horizon=500, runs=50, seed=29)
        sim = run_monte_carlo(cfg)
        theo = run_theory(cfg)
        power = [n for n in sim.series if n.startswith(("msd", "emse"))]
        report = compare(sim, theo, tol_msd_db=1.0, windows=[(400, 500)],
                         names=power)
        failed = [e.name for e in report.entries if not e.passed]
        assert report.passed, f"series beyond tolerance: {failed}"


class TestCompare:
    def _result(self, series, horizon=50):
        return AggregateResult(horizon=horizon, runs=1, n_agents=1,
                               series=series)

    def test_self_comparison_is_exact(self):
        result = run_theory(small_config())
        report = compare(result, result)
        assert report.passed
        for entry in report.entries:
            assert entry.max_abs_dev == 0.0
            assert entry.steady_abs_dev == 0.0

    def test_decibel_offset_is_recovered(self):
        base = np.linspace(1.0, 2.0, 50)
        a = self._result({"msd_combined": base})
        b = self._result({"msd_combined": base * 10 ** 0.1})
        report = compare(a, b, tol_msd_db=1.5)
        entry = report.entries[0]
        np.testing.assert_allclose(entry.max_abs_dev, 1.0, atol=1e-9)
        np.testing.assert_allclose(entry.steady_abs_dev, 1.0, atol=1e-9)
        assert entry.passed
        assert not compare(a, b, tol_msd_db=0.5).passed

    def test_gamma_uses_linear_units(self):
        base = np.full(50, 0.5)
        a = self._result({"gamma_mean_a1": base})
        b = self._result({"gamma_mean_a1": base + 0.1})
        report = compare(a, b, tol_gamma=0.05)
        entry = report.entries[0]
        assert entry.kind == "linear"
        np.testing.assert_allclose(entry.steady_abs_dev, 0.1, atol=1e-12)
        assert not entry.passed
        assert compare(a, b, tol_gamma=0.2).passed

    def test_default_window_is_final_tenth(self):
        result = run_theory(small_config(horizon=500))
        report = compare(result, result)
        assert report.windows == ((450, 500),)

    def test_explicit_windows_validated(self):
        result = run_theory(small_config())
        with pytest.raises(ValueError, match="window"):
            compare(result, result, windows=[(30, 90)])

    def test_horizon_mismatch(self):
        with pytest.raises(ValueError, match="horizon"):
            compare(run_theory(small_config(horizon=10)),
                    run_theory(small_config(horizon=12)))

    def test_missing_requested_series(self):
        result = run_theory(small_config())
        with pytest.raises(ValueError, match="absent"):
            compare(result, result, names=["msd_imaginary"])

    def test_negative_instants_are_ignored_pointwise(self):
        base = np.linspace(1.0, 2.0, 50)
        dented = base.copy()
        dented[3] = -0.5
        report = compare(self._result({"msd_cross": dented}),
                         self._result({"msd_cross": base}))
        entry = report.entries[0]
        assert np.isfinite(entry.max_abs_dev)
        assert entry.passed


class TestExport:
    def test_csv_layout(self, tmp_path):
        result = run_monte_carlo(small_config(horizon=5, runs=2))
        path = tmp_path / "out.csv"
        export_csv(result, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "n," + ",".join(result.series)
        assert len(lines) == 6
        assert lines[1].split(",")[0] == "0"
        assert lines[5].split(",")[0] == "4"

    def test_decibel_conversion(self, tmp_path):
        result = AggregateResult(
            horizon=1, runs=1, n_agents=1,
            series={"msd_combined": np.array([0.001]),
                    "gamma_mean_a1": np.array([0.25])})
        path = tmp_path / "one.csv"
        export_csv(result, path)
        row = path.read_text().strip().split("\n")[1].split(",")
        assert abs(float(row[1]) - (-30.0)) < 1e-9
        assert float(row[2]) == 0.25

    def test_nonpositive_power_becomes_nan(self, tmp_path):
        result = AggregateResult(
            horizon=3, runs=1, n_agents=1,
            series={"msd_cross": np.array([0.5, -0.5, 0.0])})
        path = tmp_path / "neg.csv"
        export_csv(result, path)
        reloaded = load_result(path)
        values = reloaded.series["msd_cross"]
        np.testing.assert_allclose(values[0], 0.5, rtol=1e-12)
        assert np.isnan(values[1]) and np.isnan(values[2])

    def test_reexport_is_byte_identical(self, tmp_path):
        result = run_monte_carlo(small_config(horizon=8, runs=3))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        export_csv(result, a)
        export_csv(result, b)
        assert a.read_bytes() == b.read_bytes()

    def test_column_selection(self, tmp_path):
        result = run_monte_carlo(small_config(horizon=4, runs=2))
        path = tmp_path / "cols.csv"
        export_csv(result, path, columns=["msd_combined", "gamma_mean_a1"])
        header = path.read_text().split("\n")[0]
        assert header == "n,msd_combined,gamma_mean_a1"
        with pytest.raises(ValueError, match="do not exist"):
            export_csv(result, path, columns=["msd_wrong"])

    def test_csv_round_trip(self, tmp_path):
        result = run_monte_carlo(small_config(horizon=10, runs=2))
        path = tmp_path / "round.csv"
        export_csv(result, path)
        loaded = load_result(path)
        assert loaded.horizon == 10
        for name, values in result.series.items():
            if name.startswith(("msd", "emse")):
                np.testing.assert_allclose(loaded.series[name], values,
                                           rtol=1e-12)
            else:
                np.testing.assert_allclose(loaded.series[name], values,
                                           rtol=0, atol=1e-16)

    def test_json_round_trip_and_metadata(self, tmp_path):
        cfg = config_from_dict(raw_config(horizon=6, runs=2))
        result = run_monte_carlo(cfg)
        path = tmp_path / "round.json"
        export_json(result, path)
        payload = json.loads(path.read_text())
        assert payload["metadata"]["kind"] == "monte_carlo"
        assert payload["metadata"]["runs"] == 2
        assert payload["metadata"]["config_hash"] == cfg.config_hash
        assert payload["columns"][0] == "n"
        loaded = load_result(path)
        assert loaded.metadata()["config_hash"] == cfg.config_hash
        for name, values in result.series.items():
            np.testing.assert_allclose(loaded.series[name], values,
                                       rtol=1e-12, atol=1e-300)

    def test_format_inference_and_rejection(self, tmp_path):
        result = run_monte_carlo(small_config(horizon=3, runs=1))
        export(result, tmp_path / "auto.json")
        assert json.loads((tmp_path / "auto.json").read_text())["columns"]
        with pytest.raises(ValueError, match="unknown export format"):
            export(result, tmp_path / "auto.xml")

    def test_compare_on_reloaded_files(self, tmp_path):
        cfg = small_config(horizon=30, runs=4)
        sim, theo = run_monte_carlo(cfg), run_theory(cfg)
        sim_path, theo_path = tmp_path / "s.csv", tmp_path / "t.csv"
        export_csv(sim, sim_path)
        export_csv(theo, theo_path)
        report = compare(load_result(sim_path), load_result(theo_path),
                         tol_msd_db=50.0, tol_gamma=1.0)
        assert report.passed
