"""Configuration parsing, the benchmark problem factory, CSV output, and the
command-line entry point."""

import csv

import numpy as np
import pytest

from trtmg import phys
from trtmg.cli import (ConfigError, RunConfig, fc_problem, main, parse_config,
                       write_config, write_outputs)
from trtmg.cycles import ConvergenceCriteria, make_schedule, run_simulation
from trtmg.phys import CONST


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestParseConfig:
    def test_defaults(self):
        assert parse_config() == RunConfig()
        assert RunConfig().grid_counts == (256, 1)
        assert RunConfig().snapshots == (0.2, 0.4, 0.6, 1.0, 2.0, 3.0)

    def test_flag_overrides(self):
        cfg = parse_config(None, {"cycle": "W", "grids": "64,16,1",
                                  "lmax": "2", "dt": "0.01"})
        assert cfg.cycle == "W"
        assert cfg.grids == (64, 16, 1)
        assert cfg.lmax == 2 and cfg.dt == 0.01
        # the fine grid fixes the group count when only grids is given
        assert cfg.groups == 64

    def test_file_with_comments(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("# benchmark setup\n"
                     "groups = 16\n"
                     "\n"
                     "dt = 0.04   # coarse step\n"
                     "snapshots = 0.2,0.4\n")
        cfg = parse_config(p)
        assert cfg.groups == 16 and cfg.dt == 0.04
        assert cfg.snapshots == (0.2, 0.4)

    def test_flags_beat_file(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("dt = 0.04\ncells = 20\n")
        cfg = parse_config(p, {"dt": "0.02", "cells": None})
        assert cfg.dt == 0.02       # flag wins
        assert cfg.cells == 20      # unset flag falls through to the file

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="wavelength"):
            parse_config(None, {"wavelength": "3"})

    def test_bad_value_names_key(self):
        with pytest.raises(ConfigError, match="lmax"):
            parse_config(None, {"lmax": "four"})

    def test_malformed_line_names_location(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("groups = 16\nnonsense line\n")
        with pytest.raises(ConfigError, match=r"run\.cfg:2"):
            parse_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "absent.cfg")

    @pytest.mark.parametrize("overrides", [
        {"grids": "256,300,1"},              # grids must decrease
        {"groups": "64", "grids": "32,1"},   # fine grid must match groups
        {"cycle": "Q"},
        {"cycle": "W"},                      # W needs three grids
        {"lmax": "0"},
        {"tend": "-1"},
        {"problem": "marshak2d"},
        {"groups": "2"},
        {"eps": "1e-8", "eps_tilde": "1e-6"},
    ])
    def test_validation(self, overrides):
        with pytest.raises(ConfigError):
            parse_config(None, overrides)


class TestWriteConfig:
    def test_round_trip_exact(self, tmp_path):
        cfg = parse_config(None, {"cycle": "F", "grids": "64,16,4,1",
                                  "lmax": "2", "dt": "0.019999999999",
                                  "snapshots": "0.2,3.0", "eps": "2e-6"})
        p = tmp_path / "eff.cfg"
        write_config(cfg, p)
        assert parse_config(p) == cfg

    def test_round_trip_normalizes_grids(self, tmp_path):
        p = tmp_path / "eff.cfg"
        write_config(RunConfig(), p)
        cfg = parse_config(p)
        assert cfg.grids == (256, 1)
        assert cfg.grid_counts == RunConfig().grid_counts
        # stable after the first normalization
        write_config(cfg, p)
        assert parse_config(p) == cfg


class TestFcProblem:
    def test_benchmark_wiring(self):
        cfg = RunConfig(groups=16, grids=(16, 4, 1))
        prob = fc_problem(cfg)
        const = prob.constants
        assert prob.mesh.n_cells == 10
        assert prob.mesh.faces[-1] == 4.0
        assert prob.hierarchy.counts == (16, 4, 1)
        assert prob.material.c_v == pytest.approx(0.5917 * const.a_R)
        assert prob.T_init == 1e-3
        B_b = phys.planck_groups(np.array([1.0]), prob.hierarchy.fine.edges,
                                 const)[0]
        pos = prob.quad.positive
        assert np.all(prob.inc_left[:, pos] == 0.5 * B_b[:, None])
        assert np.all(prob.inc_left[:, ~pos] == 0.0)
        assert np.all(prob.inc_right == 0.0)
        assert np.array_equal(prob.E_in[:, 0], B_b / const.c)
        assert np.array_equal(prob.F_in[:, 0], 0.5 * B_b)
        assert np.all(prob.E_in[:, 1] == 0.0) and np.all(prob.F_in[:, 1] == 0.0)

    def test_opacity_model(self):
        cfg = RunConfig(groups=16)
        prob = fc_problem(cfg)
        nu = np.array([0.5, 2.0])
        got = prob.sigma(nu, np.array([1.0]))
        want = 27.0 * (1.0 - np.exp(-nu / 1.0)) / nu**3
        assert np.allclose(got, want, rtol=1e-15)


@pytest.fixture(scope="module")
def small_run():
    cfg = RunConfig(groups=16, grids=(16, 1))
    prob = fc_problem(cfg)
    sched = make_schedule("V", (16, 1), 4)
    res = run_simulation(prob, sched, ConvergenceCriteria(), 2e-2, 0.06,
                         snapshot_times=(0.02, 0.04))
    return prob, res


class TestWriteOutputs:
    def test_files_and_headers(self, small_run, tmp_path):
        prob, res = small_run
        write_outputs(res, tmp_path, x=prob.mesh.centers)
        prof = _rows(tmp_path / "profiles.csv")
        assert prof[0] == ["time_ns", "x_cm", "T_keV", "E_total"]
        assert len(prof) == 1 + 2 * prob.mesh.n_cells
        stats = _rows(tmp_path / "stats.csv")
        assert stats[0] == ["step", "t_ns", "M_ti", "M_c", "M_lo"]
        assert len(stats) == 1 + len(res.steps)
        totals = _rows(tmp_path / "totals.csv")
        assert totals[0] == ["cycle", "n_grids", "grids", "l_max",
                             "N_ti", "N_c", "N_lo"]
        assert totals[1] == ["V", "2", "16;1", "4", str(res.stats.n_ti),
                             str(res.stats.n_c), str(res.stats.n_lo)]
        conv = _rows(tmp_path / "conv_hist.csv")
        assert conv[0] == ["step", "s", "l", "dT_inf"]
        assert len(conv) == 1 + len(res.conv)

    def test_values_round_trip(self, small_run, tmp_path):
        # 17 significant digits reproduce the doubles exactly
        prob, res = small_run
        write_outputs(res, tmp_path, x=prob.mesh.centers)
        prof = _rows(tmp_path / "profiles.csv")[1:]
        t0, T0, E0 = res.snapshots[0]
        assert float(prof[0][0]) == t0
        assert float(prof[0][2]) == T0[0]
        assert float(prof[0][3]) == E0[0]
        conv = _rows(tmp_path / "conv_hist.csv")[1:]
        assert float(conv[0][3]) == res.conv[0].dT

    def test_no_snapshots_skips_profiles(self, small_run, tmp_path):
        prob, res = small_run
        bare = run_simulation(fc_problem(RunConfig(groups=16, grids=(16, 1))),
                              make_schedule("V", (16, 1), 4),
                              ConvergenceCriteria(), 2e-2, 0.02)
        write_outputs(bare, tmp_path)
        assert not (tmp_path / "profiles.csv").exists()
        assert (tmp_path / "stats.csv").exists()
        assert (tmp_path / "totals.csv").exists()

    def test_snapshots_without_coordinates(self, small_run, tmp_path):
        prob, res = small_run
        with pytest.raises(ValueError):
            write_outputs(res, tmp_path)


class TestMain:
    def test_end_to_end(self, tmp_path, capsys):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("groups = 16\n"
                           "dt = 0.02\n"
                           "tend = 0.06\n"
                           "snapshots = 0.02,0.04\n"
                           f"out = {tmp_path / 'out'}\n")
        assert main(["--config", str(cfgfile)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("V cycle on 16;1 l_max=4: N_ti=")
        for name in ("config.txt", "profiles.csv", "stats.csv", "totals.csv",
                     "conv_hist.csv"):
            assert (tmp_path / "out" / name).exists()
        totals = _rows(tmp_path / "out" / "totals.csv")[1]
        assert f"N_ti={totals[4]} N_c={totals[5]} N_lo={totals[6]}" in out

    def test_flags_override_config(self, tmp_path):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("groups = 16\ndt = 0.02\ntend = 0.06\n")
        assert main(["--config", str(cfgfile), "--tend", "0.02",
                     "--out", str(tmp_path / "o2")]) == 0
        stats = _rows(tmp_path / "o2" / "stats.csv")
        assert len(stats) == 2    # header plus a single step

    def test_config_error_exit(self, tmp_path, capsys):
        assert main(["--cycle", "Q", "--out", str(tmp_path)]) == 2
        assert "configuration error" in capsys.readouterr().err
        assert main(["--config", str(tmp_path / "nope.cfg")]) == 2

    def test_convergence_error_exit(self, tmp_path, capsys):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("groups = 16\nmax_outer = 1\n"
                           "dt = 0.02\ntend = 0.02\n"
                           f"out = {tmp_path / 'out'}\n")
        assert main(["--config", str(cfgfile)]) == 3
        assert "convergence failure" in capsys.readouterr().err

    def test_io_error_exit(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["--groups", "16", "--dt", "0.02", "--tend", "0.02",
                     "--out", str(blocker / "sub")]) == 4
        assert "i/o error" in capsys.readouterr().err
