import csv
import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from plmodica.cli import ConfigError, dispatch, main, parse_config
from plmodica.grid import read_plmf

BASE = """\
experiment = {exp}
extent = {extent}
h = {h}
boundary = {boundary}
p = {p}
potential = {potential}
datum = {datum}
"""


def cfg_text(exp="run", extent="-10, 10", h="10/256", boundary="dirichlet", p="2", potential="double_well",
             datum="constant:1", **extra):
    text = BASE.format(exp=exp, extent=extent, h=h, boundary=boundary, p=p, potential=potential, datum=datum)
    return text + "".join(f"{k} = {v}\n" for k, v in extra.items())


class TestParse:
    def test_complete(self):
        cfg = parse_config(cfg_text(T="0.5", eps="0.1", record_every="10"))
        assert cfg.experiment == "run" and cfg.h == 10 / 256 and cfg.T == 0.5
        assert cfg.grid().shape == (513,)
        assert cfg.params().record_every == 10

    def test_comments_and_arithmetic(self):
        text = "# header\n" + cfg_text(extent="0, 2*pi", h="2*pi/128  # fine", boundary="periodic")
        cfg = parse_config(text)
        assert cfg.grid().shape == (128,)

    def test_p_range(self):
        with pytest.raises(ConfigError, match=r"line 5: p must lie in \(1, 2\]") as exc:
            parse_config(cfg_text(p="2.5"))
        assert exc.value.line == 5

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError, match="line 1: unknown experiment 'dance'"):
            parse_config(cfg_text(exp="dance"))

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="line 8: unknown key 'colour'"):
            parse_config(cfg_text(colour="blue"))

    def test_missing_key(self):
        text = "\n".join(line for line in cfg_text().splitlines() if not line.startswith("datum"))
        with pytest.raises(ConfigError, match="missing mandatory key 'datum'"):
            parse_config(text)

    @pytest.mark.parametrize("extra, msg", [
        (dict(eps="-1"), "eps must be nonnegative"),
        (dict(eps_list="0.1, 0.2"), "eps_list"),
        (dict(record_every="2.5"), "integer"),
        (dict(T="__import__('os')"), "not a number"),
        (dict(mollify_radius="0.001"), "kernel under-resolved"),
    ])
    def test_bad_values(self, extra, msg):
        with pytest.raises(ConfigError, match=msg):
            parse_config(cfg_text(**extra))

    @pytest.mark.parametrize("datum", ["sine:1.5", "tanh-wave:3", "gauss", "constant:x"])
    def test_bad_datum(self, datum):
        with pytest.raises(ConfigError, match="bad datum spec"):
            parse_config(cfg_text(datum=datum))

    def test_pair_needs_partner(self):
        with pytest.raises(ConfigError, match="pair needs"):
            parse_config(cfg_text(exp="pair"))

    def test_duplicate(self):
        with pytest.raises(ConfigError, match="duplicate key 'p'"):
            parse_config(cfg_text(p="2") + "p = 1.5\n")


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


class TestDispatch:
    def test_verify_tanh(self, tmp_path):
        cfg = parse_config(cfg_text(exp="verify-estimate", datum="tanh-wave"))
        assert dispatch(cfg, tmp_path) == 0
        report = (tmp_path / "report.txt").read_text()
        assert "PASS" in report and "FAIL" not in report
        excess = float(report.split("measured ")[1].split()[0])
        assert excess <= 5 * (10 / 256) ** 2
        assert (tmp_path / "diagnostics.csv").exists() and list(tmp_path.glob("*.plmf"))

    def test_run_constant(self, tmp_path):
        cfg = parse_config(cfg_text(T="0.2", record_every="20"))
        assert dispatch(cfg, tmp_path) == 0
        header, data = read_csv(tmp_path / "diagnostics.csv")
        assert header == ["t", "maxP", "supU", "supDu", "minF", "osc"]
        assert np.all(data[:, 5] <= 1e-12)
        snaps = sorted(tmp_path.glob("snap_*.plmf"))
        assert len(snaps) == len(data)
        np.testing.assert_array_equal(read_plmf(snaps[-1]).values, 1.0)

    def test_pair_identical_exit(self, tmp_path):
        cfg_path = tmp_path / "pair.cfg"
        cfg_path.write_text(cfg_text(exp="pair", datum="constant:1", datum2="constant:1"))
        assert main([str(cfg_path), "--out", str(tmp_path / "o")]) != 0
        assert "zero initial separation" in (tmp_path / "o" / "report.txt").read_text()

    def test_pair_double_well(self, tmp_path):
        text = cfg_text(exp="pair", extent="0, 2*pi", h="2*pi/64", boundary="periodic", datum="sine:1",
                        perturb="1e-3", T="0.5")
        text = text.replace("datum = sine:1", "datum = sine:1\nmollify_radius = 2*pi/64")
        assert dispatch(parse_config(text), tmp_path) == 0
        assert (tmp_path / "diagnostics_second.csv").exists()

    def test_oracle_heat(self, tmp_path):
        text = cfg_text(exp="oracle-compare", extent="0, 2*pi", h="2*pi/128", boundary="periodic",
                        potential="zero", datum="sine:1", T="0.5")
        assert dispatch(parse_config(text), tmp_path) == 0

    def test_eps_sweep(self, tmp_path):
        text = cfg_text(exp="eps-sweep", datum="tanh-wave", T="0.1", eps_list="0.2, 0.1, 0.05")
        assert dispatch(parse_config(text), tmp_path) == 0
        assert len(list(tmp_path.glob("eps*_final.plmf"))) == 3

    def test_zeros_constant(self, tmp_path):
        text = cfg_text(exp="zeros", extent="-2, 2", h="0.1", steps="100", p="1.5")
        assert dispatch(parse_config(text), tmp_path) == 0

    def test_file_datum(self, tmp_path):
        src = tmp_path / "src"
        cfg = parse_config(cfg_text(T="0.01", datum="tanh-wave"))
        dispatch(cfg, src)
        text = cfg_text(exp="verify-estimate", datum="file:src/snap_00000.plmf", tolerance="5*(10/256)**2")
        (tmp_path / "f.cfg").write_text(text)
        assert main([str(tmp_path / "f.cfg"), "--out", str(tmp_path / "o")]) == 0

    def test_violating_verify_exits_1(self, tmp_path):
        text = cfg_text(exp="verify-estimate", extent="0, 2*pi", h="2*pi/64", boundary="periodic", datum="sine:3")
        assert dispatch(parse_config(text), tmp_path) == 1
        assert "FAIL" in (tmp_path / "report.txt").read_text()


class TestMain:
    def test_missing_file(self, tmp_path, capsys):
        assert main([str(tmp_path / "nope.cfg")]) == 2
        assert "cannot read" in capsys.readouterr().err

    def test_config_error(self, tmp_path, capsys):
        (tmp_path / "bad.cfg").write_text(cfg_text(p="3"))
        assert main([str(tmp_path / "bad.cfg")]) == 2
        assert "line 5" in capsys.readouterr().err


def _run_cli(cfg_path, out, threads, env_threads=None):
    env = dict(os.environ, NUMBA_NUM_THREADS="4")
    env.pop("MODICA_THREADS", None)
    if env_threads is not None:
        env["MODICA_THREADS"] = str(env_threads)
    cmd = [sys.executable, "-m", "plmodica", str(cfg_path), "--out", str(out), "--threads", str(threads)]
    return subprocess.run(cmd, env=env, capture_output=True, text=True, timeout=300)


def test_diagnostics_identical_across_threads(tmp_path):
    text = textwrap.dedent("""\
        experiment = run
        n = 2
        extent = -3, 3, -3, 3
        h = 6/48
        boundary = dirichlet
        p = 1.5
        eps = 0.1
        potential = double_well
        datum = modica-profile:0.2
        T = 0.05
        record_every = 5
    """)
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(text)
    outs = []
    for k, (threads, env_threads) in enumerate([(1, None), (4, None), (1, 3)]):
        res = _run_cli(cfg_path, tmp_path / f"o{k}", threads, env_threads)
        assert res.returncode == 0, res.stderr
        outs.append((tmp_path / f"o{k}" / "diagnostics.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


@pytest.mark.parametrize("name", sorted(f for f in os.listdir(CONFIG_DIR) if f.endswith(".cfg")))
def test_shipped_configs(tmp_path, name):
    want = 1 if name == "verify_2d.cfg" else 0
    assert main([os.path.join(CONFIG_DIR, name), "--out", str(tmp_path)]) == want
    assert (tmp_path / "report.txt").exists() and (tmp_path / "diagnostics.csv").exists()
