import numpy as np
import pytest

from hdg_kdv import cli, problems
from hdg_kdv import experiments as ex
from hdg_kdv.config import ConfigError, load_config, parse_config
from hdg_kdv.flux import TauFRule
from hdg_kdv.mesh import build_uniform_mesh
from hdg_kdv.report import (
    Check,
    convergence_checks,
    format_table,
    read_errors_csv,
    read_snapshots,
    write_errors_csv,
)
from hdg_kdv.stepper import Discretization, SolutionState
from hdg_kdv.flux import StabilizationParams
from hdg_kdv.verify import ExperimentReport, LevelRecord

TRIG = """
[problem]
name = trig
a = 0
b = 1
beta = {beta}

[discretization]
k = 1
N = 4

[time]
T = 0.02
dt = 0.01
"""


# -- configuration --------------------------------------------------------------------


def test_parse_trig_config():
    cfg = parse_config(TRIG.format(beta=0))
    assert cfg.k == 1 and cfg.N == 4 and cfg.T == 0.02
    assert cfg.dt_rule == ex.DtRule("fixed", 0.01)
    assert cfg.problem.name == "trig" and cfg.problem.flux.beta == 0.0


def test_missing_k_names_the_key():
    with pytest.raises(ConfigError) as err:
        parse_config("[problem]\nname = experiment1\n[discretization]\nN = 4\n")
    assert err.value.section == "discretization" and err.value.key == "k"
    assert "'k'" in str(err.value)


@pytest.mark.parametrize(
    "text, section, key",
    [
        ("[problem]\nname = trig\ncolour = red\n[discretization]\nk = 1\nN = 2\n", "problem", "colour"),
        ("[problem]\nname = trig\n[discretization]\nk = 1\nN = 2\n[extras]\nx = 1\n", "extras", None),
        ("[problem]\nname = experiment1\nbeta = 2\n[discretization]\nk = 1\nN = 2\n", "problem", "beta"),
        ("[problem]\nname = nope\n[discretization]\nk = 1\nN = 2\n", "problem", "name"),
        ("[problem]\nname = trig\n[discretization]\nk = 1\nN = 2\nlevels = 1..3\n", "discretization", "levels"),
        ("[problem]\nname = trig\n[discretization]\nk = 1\nN = 2\n[time]\nscheme = rk4\n", "time", "scheme"),
        ("[problem]\nname = trig\n[discretization]\nk = 1\nN = 2\n[tau]\ntau_F = cubic\n", "tau", "tau_f"),
    ],
)
def test_config_errors_name_the_location(text, section, key):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.section == section
    assert err.value.key == key


def test_config_line_numbers():
    with pytest.raises(ConfigError) as err:
        parse_config("[problem]\nname = trig\n\n[discretization]\nk = -1\nN = 2\n")
    assert err.value.line == 5


def test_config_tau_and_levels():
    cfg = parse_config(
        "[problem]\nname = experiment2\n[discretization]\nk = 2\nlevels = 2..4\n"
        "[time]\ndt_rule = h3\ndt_coeff = 0.05\n[tau]\ntau_F = constant\ntau_F_value = 3\n"
    )
    assert cfg.N is None and cfg.levels == (2, 4)
    assert cfg.dt_rule == ex.DtRule("h3", 0.05)
    assert cfg.params.tau_F_rule == TauFRule.constant(3.0)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_dt_rules():
    assert ex.DtRule().step(0.5, 1) == pytest.approx(0.025)
    assert ex.DtRule().step(0.5, 2) == pytest.approx(0.0125)
    assert ex.DtRule("fixed", 0.3).step(0.5, 3) == 0.3
    with pytest.raises(ValueError):
        ex.DtRule("fixed", -1.0)
    assert ex.time_grid(0.1, 0.03) == pytest.approx((0.025, 4))
    assert ex.time_grid(0.1, 0.025) == pytest.approx((0.025, 4))


# -- report I/O ------------------------------------------------------------------------


def test_errors_csv_roundtrip_is_exact(tmp_path):
    rep = ex.run_experiment_1(ex.experiment_1_config(1, levels=(1, 3)))
    path = tmp_path / "errors.csv"
    write_errors_csv(path, [rep])
    (back,) = read_errors_csv(path)
    assert back.k == 1
    for a, b in zip(rep.levels, back.levels):
        assert (a.level, a.h, a.e_u, a.e_q, a.e_p) == (b.level, b.h, b.e_u, b.e_q, b.e_p)
        assert (a.order_u, a.order_q, a.order_p) == (b.order_u, b.order_q, b.order_p)
    assert back.levels[0].order_u is None


def _report(k, errs, hs):
    rep = ExperimentReport(k, [LevelRecord(i, 0, h, 0.0, e, e, e) for i, (e, h) in enumerate(zip(errs, hs))])
    rep.fill_orders()
    return rep


def test_convergence_checks():
    rep = _report(1, [4e-2, 1e-2, 2.5e-3], [0.5, 0.25, 0.125])
    (order,) = convergence_checks(rep)
    assert order.passed
    checks = convergence_checks(rep, {1: (1e-2, 1e-2, 1e-2)})
    assert [c.passed for c in checks] == [True, False]
    slow = _report(0, [1.0, 0.5, 0.25], [0.5, 0.25, 0.125])
    assert convergence_checks(slow, k0_band=(0.7, 1.3))[0].passed
    assert Check("a", False, "x").line() == "FAIL  a  (x)"
    assert "e_u" in format_table([rep])


# -- runs and the command line ---------------------------------------------------------


def test_linear_custom_run_takes_one_newton_iteration():
    run = ex.run_custom(parse_config(TRIG.format(beta=0)))
    assert set(run.result.newton_iterations) == {1}
    assert run.relative_errors["u"] < 1e-2


def test_zero_problem_writes_zero_snapshots(tmp_path):
    cfg = tmp_path / "zero.ini"
    cfg.write_text(
        "[problem]\nname = zero\nbeta = 3\n[discretization]\nk = 2\nN = 3\n[time]\nT = 0.03\ndt = 0.01\n"
        f"[output]\ndir = {tmp_path / 'out'}\nsnapshot_every = 1\n"
    )
    assert cli.main(["run", "--config", str(cfg)]) == cli.EXIT_OK
    snaps = read_snapshots(tmp_path / "out" / "snapshot_u.csv")
    assert sorted(snaps) == pytest.approx([0.0, 0.01, 0.02, 0.03])
    assert all(not v.any() for _, v in snaps.values())
    assert (tmp_path / "out" / "energy.csv").exists() and (tmp_path / "out" / "report.txt").exists()


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[problem]\nname = trig\n[discretization]\nN = 4\n")
    assert cli.main(["run", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert "k" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "none.ini")]) == cli.EXIT_CONFIG


def test_cli_solver_failure_exit_code(tmp_path):
    cfg = tmp_path / "hard.ini"
    cfg.write_text(TRIG.format(beta=3) + "[newton]\nmax_iters = 1\nabs_tol = 1e-14\nrel_tol = 1e-14\n"
                   "[init]\nmode = projection\n")
    assert cli.main(["run", "--config", str(cfg)]) == cli.EXIT_SOLVER


def test_cli_convergence_writes_outputs(tmp_path, capsys):
    out = tmp_path / "conv"
    code = cli.main(["convergence", "--experiment", "1", "--k", "1", "--levels", "1..3", "--out", str(out)])
    assert code == cli.EXIT_OK
    text = capsys.readouterr().out
    assert "PASS" in text and "e_u" in text
    assert len(read_errors_csv(out / "errors.csv")[0].levels) == 3
    assert "levels = 1..3" in (out / "report.txt").read_text()


def test_cli_assert_failure_exit_code(capsys):
    code = cli.main(["soliton", "--N", "8", "--k", "1", "--dt", "0.05", "--T", "0.1", "--assert"])
    assert code == cli.EXIT_ASSERT
    assert "FAIL" in capsys.readouterr().out


def test_cli_check_tau(capsys):
    assert cli.main(["check-tau", "--tau", "0", "-1", "1", "1"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "tau = (0, -1, 1, 1)" in out
    assert "False" not in out


def test_cli_projection_test(capsys):
    assert cli.main(["projection-test", "--k", "2", "--assert"]) == cli.EXIT_OK
    assert capsys.readouterr().out.count("PASS") == 2
    assert cli.main(["projection-test", "--k", "0"]) == cli.EXIT_CONFIG
    assert cli.main(["projection-test", "--k", "1", "--tau", "1", "1", "0", "1"]) == cli.EXIT_CONFIG


def test_cli_rejects_bad_levels():
    with pytest.raises(SystemExit):
        cli.main(["convergence", "--experiment", "1", "--k", "1", "--levels", "3"])


# -- two-soliton diagnostics -------------------------------------------------------------


def test_interaction_summary_on_exact_data():
    prob = problems.two_soliton()
    disc = Discretization(build_uniform_mesh(prob.a, prob.b, 50), 3, prob.flux, StabilizationParams())
    snaps = []
    for t in np.linspace(0.0, 1.0, 21):
        u = disc.project(lambda x, t=t: prob.exact.u(x, t))
        z = np.zeros_like(u)
        snaps.append((float(t), SolutionState(u, z, z, np.zeros(51), np.zeros(50), float(t))))
    summary = ex.interaction_summary(disc, snaps)
    assert summary.tall_behind_at_start and summary.tall_ahead_later
    assert summary.crossing_detected
    assert abs(summary.overlap_time - 0.5) <= 0.15


def test_peak_positions_single_bump():
    prob = problems.soliton()
    disc = Discretization(build_uniform_mesh(prob.a, prob.b, 40), 2, prob.flux, StabilizationParams())
    xs, vs = ex.peak_positions(disc, disc.project(prob.u0))
    assert len(xs) == 1
    assert xs[0] == pytest.approx(-4.0, abs=0.15)
    assert vs[0] == pytest.approx(2.0, rel=2e-2)
