"""End-to-end tests of the command-line surface.

Each command is exercised in-process through ``cli.main`` so exit codes
and emitted files can be checked without spawning subprocesses.  The
expensive sweeps run at reduced resolution; full-scale runs live in the
acceptance suite.
"""

import json
import math
import types
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import simpson

from pseudosl import cli

NORMAL_FORM_FIRST_EIGENVALUE = 47.88530461245476
PI_8 = math.pi / 8


def run(*argv):
    return cli.main(list(argv))


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


class TestConfigParsing:
    def test_scalars_arrays_comments(self):
        text = (
            "# a comment\n"
            "epsilon = 0.5\n"
            "nodes = 96   # trailing comment\n"
            "r = [1.0, 0.25]\n"
            "export_profile = true\n"
            "out = runs/a\n"
            "\n"
        )
        parsed = cli.parse_config_text(text)
        assert parsed == {
            "epsilon": 0.5,
            "nodes": 96,
            "r": (1.0, 0.25),
            "export_profile": True,
            "out": "runs/a",
        }

    def test_malformed_line_rejected(self):
        with pytest.raises(cli.ConfigError, match="line 2"):
            cli.parse_config_text("epsilon = 0.5\njust words\n")

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("epsilon = 0.5\nwavelength = 3\n")
        with pytest.raises(cli.ConfigError, match="wavelength"):
            cli.resolve_config(str(cfg), {})

    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("epsilon = 0.5\nseed = 3\nr = [1.0]\n")
        resolved = cli.resolve_config(
            str(cfg), {"epsilon": 0.25, "r": None, "nodes": 64}
        )
        assert resolved.epsilon == 0.25  # flag wins
        assert resolved.seed == 3  # file survives where no flag given
        assert resolved.r_coeffs == (1.0,)  # None flag does not override
        assert resolved.nodes == 64

    def test_range_strings_coerced(self):
        resolved = cli.resolve_config(None, {"re_range": "30,210", "levels": "1,2"})
        assert resolved.re_range == (30.0, 210.0)
        assert resolved.levels == (1.0, 2.0)

    def test_round_trip_through_text(self, tmp_path):
        original = cli.resolve_config(
            None,
            {"epsilon": 0.125, "r": "1.0,0.5", "seed": 9, "levels": "1.5"},
        )
        cfg = tmp_path / "c.txt"
        cfg.write_text(original.to_text("spectrum"))
        restored = cli.resolve_config(str(cfg), {})
        assert restored == original


class TestSpectrumCommand:
    def test_default_field_table(self, tmp_path):
        out = tmp_path / "a"
        assert run("spectrum", "--out", str(out), "--s-max", "40") == 0
        header, rows = read_csv(out / "spectrum.csv")
        assert header == ["index", "Re E", "Im E", "mismatch_residual", "imag_purity"]
        assert float(rows[0][1]) == 0.0 and float(rows[0][2]) == 0.0
        first = complex(float(rows[1][1]), float(rows[1][2]))
        assert abs(first - 1j * NORMAL_FORM_FIRST_EIGENVALUE) <= 5e-5 * abs(first)
        for row in rows[1:]:
            assert float(row[4]) <= 1e-8
        assert (out / "run_config.txt").exists()

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("spectrum", "--out", str(a), "--s-max", "35") == 0
        assert run("spectrum", "--out", str(b), "--s-max", "35") == 0
        assert (a / "spectrum.csv").read_bytes() == (b / "spectrum.csv").read_bytes()

    def test_purity_violation_fails(self, tmp_path, monkeypatch):
        def fake(tp, s_max, max_count, jobs=1, n_samples=201):
            return [
                types.SimpleNamespace(
                    E=0j, mismatch_residual=0.0, imag_purity=0.0
                ),
                types.SimpleNamespace(
                    E=complex(1.0, 6.0), mismatch_residual=1e-12, imag_purity=0.16
                ),
            ]

        monkeypatch.setattr(cli, "find_eigenvalues", fake)
        assert run("spectrum", "--out", str(tmp_path / "p")) == 2

    def test_bad_epsilon_is_config_error(self, tmp_path):
        assert run("spectrum", "--epsilon", "1.5", "--out", str(tmp_path)) == 3


class TestPseudomodeCommand:
    def test_small_grid(self, tmp_path):
        out = tmp_path / "pm"
        code = run(
            "pseudomode", "--out", str(out),
            "--lam", "10,25", "--theta", f"{PI_8}",
        )
        assert code == 0
        header, rows = read_csv(out / "pseudomode.csv")
        assert header == [
            "|lambda|", "theta", "Re E", "Im E", "log10 norm_u",
            "log10 norm_residual", "log10 ratio", "log10 bound_rhs",
            "log10 resolvent_lower",
        ]
        assert len(rows) == 2
        for row in rows:
            lam, theta = float(row[0]), float(row[1])
            E = complex(float(row[2]), float(row[3]))
            assert abs(E) == pytest.approx(lam**2 / 8.0, rel=1e-12)
            assert math.atan2(E.imag, E.real) == pytest.approx(2 * theta, rel=1e-12)
            ratio, bound = float(row[6]), float(row[7])
            assert ratio <= bound
            assert float(row[8]) == pytest.approx(-ratio, abs=1e-15)

    def test_sector_violation_rejected(self, tmp_path):
        assert run(
            "pseudomode", "--out", str(tmp_path), "--theta", "0.99"
        ) == 3
        assert run(
            "pseudomode", "--out", str(tmp_path), "--lam", "1.0"
        ) == 3

    def test_profile_export_unit_norm(self, tmp_path):
        out = tmp_path / "pr"
        code = run(
            "pseudomode", "--out", str(out),
            "--lam", "10", "--theta", f"{PI_8}",
            "--export-profile", "--nodes", "2001",
        )
        assert code == 0
        header, rows = read_csv(out / "pseudomode_profile_00.csv")
        assert header == ["x", "Re u", "Im u", "|u|"]
        data = np.array([[float(c) for c in row] for row in rows])
        assert data.shape == (2001, 4)
        assert data[0, 0] == -1.0 and data[-1, 0] == 1.0
        norm_sq = simpson(data[:, 1] ** 2 + data[:, 2] ** 2, x=data[:, 0])
        assert norm_sq == pytest.approx(1.0, abs=1e-4)
        assert np.max(
            np.abs(np.hypot(data[:, 1], data[:, 2]) - data[:, 3])
        ) <= 1e-14


class TestResolventGridCommand:
    def test_sweep_with_level_fit(self, tmp_path):
        out = tmp_path / "rg"
        code = run(
            "resolvent-grid", "--out", str(out),
            "--re-range", "60,160", "--im-range", "60,160",
            "--n-re", "5", "--n-im", "5", "--nodes", "48",
            "--levels", "1.0",
        )
        assert code == 0
        header, rows = read_csv(out / "resolvent_grid.csv")
        assert header == ["Re E", "Im E", "log10 norm_estimate", "converged", "masked"]
        assert len(rows) == 25
        # re-major ordering: first five rows share Re E = 60
        assert all(float(r[0]) == 60.0 for r in rows[:5])
        for row in rows:
            assert row[3] in ("0", "1") and row[4] in ("0", "1")
        fits = json.loads((out / "level_lines.json").read_text())["levels"]
        assert len(fits) == 1
        assert 0.35 <= fits[0]["exponent"] <= 0.75
        assert fits[0]["r_squared"] >= 0.99
        assert fits[0]["n_points"] == 5

    def test_symmetric_box_self_check(self, tmp_path):
        out = tmp_path / "sym"
        code = run(
            "resolvent-grid", "--out", str(out),
            "--re-range=-20,20", "--im-range=-8,8",
            "--n-re", "3", "--n-im", "3", "--nodes", "48",
        )
        assert code == 0
        _, rows = read_csv(out / "resolvent_grid.csv")
        masked = [r for r in rows if r[4] == "1"]
        # the eigenvalue at the origin sits on this grid and must be masked
        assert len(masked) == 1
        assert float(masked[0][0]) == 0.0 and float(masked[0][1]) == 0.0

    def test_missing_ranges_rejected(self, tmp_path):
        assert run("resolvent-grid", "--out", str(tmp_path)) == 3

    def test_bad_level_is_config_error(self, tmp_path):
        code = run(
            "resolvent-grid", "--out", str(tmp_path / "x"),
            "--re-range", "60,120", "--im-range", "60,120",
            "--n-re", "5", "--n-im", "3", "--nodes", "48",
            "--levels", "40.0",
        )
        assert code == 3


class TestSvDecayCommand:
    def test_summary_and_csv(self, tmp_path):
        out = tmp_path / "sv"
        assert run("sv-decay", "--out", str(out), "--nodes", "256") == 0
        header, rows = read_csv(out / "sv_decay.csv")
        assert header == ["n", "sigma_n"]
        assert [int(r[0]) for r in rows[:3]] == [1, 2, 3]
        sigmas = np.array([float(r[1]) for r in rows])
        assert np.all(np.diff(sigmas) <= 1e-15)
        summary = json.loads((out / "sv_decay_summary.json").read_text())
        assert summary["n_nodes"] == 256
        assert summary["slope"] <= -1.3
        lo, hi = summary["slope_ci_95"]
        assert lo <= summary["slope"] <= hi

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("sv-decay", "--out", str(a), "--nodes", "256") == 0
        assert run("sv-decay", "--out", str(b), "--nodes", "256") == 0
        assert (a / "sv_decay.csv").read_bytes() == (b / "sv_decay.csv").read_bytes()
        assert (a / "sv_decay_summary.json").read_bytes() == (
            b / "sv_decay_summary.json"
        ).read_bytes()

    def test_too_small_grid_is_config_error(self, tmp_path):
        assert run("sv-decay", "--out", str(tmp_path), "--nodes", "64") == 3

    def test_slow_decay_fails(self, tmp_path, monkeypatch):
        def fake(tp, n_nodes):
            return types.SimpleNamespace(
                sigmas=np.array([1.0, 0.9, 0.8]),
                n_converged=3,
                fit_start=0,
                slope=-1.0,
                slope_stderr=0.01,
            )

        monkeypatch.setattr(cli, "sv_decay_summary", fake)
        assert run("sv-decay", "--out", str(tmp_path / "f")) == 2


class TestBesselCheckCommand:
    def test_report_passes(self, tmp_path):
        out = tmp_path / "bc"
        assert run("bessel-check", "--out", str(out), "--seed", "5") == 0
        report = json.loads((out / "bessel_check.json").read_text())
        assert report["all_pass"] is True
        assert report["conjugation_max_rel_err"] <= 1e-10
        assert report["rotation_max_rel_err"] <= 1e-10
        assert report["growth_bound_pass"] is True

    def test_seed_reproducibility(self, tmp_path):
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        assert run("bessel-check", "--out", str(a), "--seed", "5") == 0
        assert run("bessel-check", "--out", str(b), "--seed", "5") == 0
        assert run("bessel-check", "--out", str(c), "--seed", "6") == 0
        assert (a / "bessel_check.json").read_bytes() == (
            b / "bessel_check.json"
        ).read_bytes()
        ra = json.loads((a / "bessel_check.json").read_text())
        rc = json.loads((c / "bessel_check.json").read_text())
        assert ra["growth_bound_min_margin"] != rc["growth_bound_min_margin"]

    def test_identity_failure_fails(self, tmp_path, monkeypatch):
        def fake(seed=0, n_samples=100, order=2.0):
            return {"rotation_max_rel_err": 0.5, "rotation_pass": False}

        monkeypatch.setattr(cli, "bessel_identity_report", fake)
        assert run("bessel-check", "--out", str(tmp_path / "f")) == 2


class TestExitCodes:
    def test_constants(self):
        assert cli.EXIT_PASS == 0
        assert cli.EXIT_FAIL == 2
        assert cli.EXIT_CONFIG == 3

    def test_unknown_command_is_config_error(self):
        assert run("nonsense") == 3

    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("--help")
        assert exc.value.code == 0
        assert "spectrum" in capsys.readouterr().out
