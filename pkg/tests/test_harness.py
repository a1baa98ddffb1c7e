import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbsvlasov.harness import cli
from gibbsvlasov.harness.config import (
    ConfigError,
    ExperimentConfig,
    build_kernel,
    parse_config,
    parse_table,
    serialize_config,
    validate,
)
from gibbsvlasov.harness.experiments import ExperimentResult, Table, slope_fit
from gibbsvlasov.harness.outputs import emit_outputs
from gibbsvlasov.harness.pool import run_items
from gibbsvlasov.harness.seeds import seed_record, stage_code, stage_seed

TINY_THEOREM1 = """
[run]
experiment = theorem1
[physics]
N = 2, 4
R = 64
T = 0.5
dt = 0.01
times = 0.5
pairs = cos1|cos2|0.5
remainder_t = 0.5
[mcmc]
block_size = 16
[numerics]
N_hermite = 32
vlasov_dt = 0.01
volterra_dt = 0.01
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestConfig:
    def test_defaults_valid(self):
        validate(ExperimentConfig())

    def test_round_trip_default(self):
        c = ExperimentConfig()
        assert parse_config(serialize_config(c)) == c

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**40), beta=st.floats(0, 50, allow_nan=False),
           Ns=st.lists(st.integers(1, 500), min_size=1, max_size=5),
           panel=st.lists(st.sampled_from(["cos1", "sin2*He1", "He2", "0.5*cos1 - He3"]), min_size=1, max_size=4))
    def test_round_trip(self, seed, beta, Ns, panel):
        c = ExperimentConfig().replace(run={"seed": seed}, physics={"beta": beta, "N": tuple(Ns),
                                                                    "panel": tuple(panel)})
        assert parse_config(serialize_config(c)) == c

    def test_partial_file_uses_defaults(self):
        c = parse_config("[physics]\nbeta = 2.5\n")
        assert c.physics.beta == 2.5
        assert c.physics.R == ExperimentConfig().physics.R

    @pytest.mark.parametrize("text", ["[physics]\nbetta = 1\n", "[solver]\nx = 1\n", "[run]\nseed = abc\n",
                                      "[physics]\nscreened = maybe\n", "[run]\nseed = -4\n",
                                      "[physics]\nf0 = cos1*sin1\n", "[physics]\ntimes = 1.0, 0.5\n",
                                      "[physics]\npairs = cos1|cos2\n", "[kernel]\nfamily = coulomb\n",
                                      "[kernel]\nfamily = riesz\ns = 1.5\n", "[meanfield]\nbeta_grid = 0.5, 2.0\n",
                                      "[run]\nrun_id = a/b\n", "no section = 1\n"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    @pytest.mark.parametrize("table", ["1:0.5, -1", "x:0.5", "1:abc", "1 0:0.5"])
    def test_bad_table(self, table):
        with pytest.raises(ConfigError):
            parse_config(f"[kernel]\ntable = {table}\n")

    def test_table_two_dimensional(self):
        assert parse_table("1 0:0.5, -1 0:0.5", 2) == {(1, 0): 0.5, (-1, 0): 0.5}

    def test_empty_remainder_accepted(self):
        assert parse_config("[physics]\nremainder =\n").physics.remainder == ""

    def test_build_kernel_default_is_cosine(self):
        k = build_kernel(ExperimentConfig())
        assert k.potential(np.array([[0.0], [0.5]])) == pytest.approx([1.0, -1.0])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            cli.resolve_config(cli.build_parser().parse_args(["partition", "--config", str(tmp_path / "no.ini")]))

    def test_run_id_default(self):
        assert ExperimentConfig().replace(run={"seed": 7}).run_id == "run7"


class TestSeeds:
    def test_stage_streams_differ(self):
        a = np.random.default_rng(stage_seed(1, "theorem1", 0)).random()
        b = np.random.default_rng(stage_seed(1, "partition", 0)).random()
        c = np.random.default_rng(stage_seed(1, "theorem1", 1)).random()
        assert len({a, b, c}) == 3

    def test_reproducible(self):
        a = np.random.default_rng(stage_seed(5, "meanfield", 3)).random(4)
        b = np.random.default_rng(stage_seed(5, "meanfield", 3)).random(4)
        np.testing.assert_array_equal(a, b)

    def test_stage_code_is_crc32(self):
        assert stage_code("") == 0
        assert seed_record(3, "x", range(2))["items"] == [0, 1]


def _square(x):
    return x * x


class TestPool:
    def test_order_kept(self):
        items = [(i,) for i in range(7)]
        assert run_items(_square, items, 1) == [i * i for i in range(7)]
        assert run_items(_square, items, 2) == [i * i for i in range(7)]


class TestSlopeFit:
    def test_exact_power(self):
        N = np.array([8, 16, 32, 64])
        slope, err = slope_fit(N, 3.0 * N**-0.5, 0.01 * N**-0.5)
        assert slope == pytest.approx(-0.5, abs=1e-12)
        assert err > 0

    def test_degenerate(self):
        assert math.isnan(slope_fit([8, 16], [0.0, 0.0], [1.0, 1.0])[0])


class TestOutputs:
    def test_empty_result(self, tmp_path):
        path = emit_outputs(None, ExperimentConfig(), tmp_path)
        m = json.loads(path.read_text())
        assert m["files"] == [] and m["passed"] is True
        assert path.name == "run20240601-manifest.json"

    def test_csv_quoting_and_checksums(self, tmp_path):
        r = ExperimentResult("partition", tables=[Table("t", ["a", "b"], [[1, 'say "hi", ok'], [2.5, True]])])
        path = emit_outputs(r, ExperimentConfig(), tmp_path)
        raw = (tmp_path / "run20240601-partition-t.csv").read_bytes()
        assert raw == b'a,b\r\n1,"say ""hi"", ok"\r\n2.5,true\r\n'
        m = json.loads(path.read_text())
        assert [f["name"] for f in m["files"]] == ["run20240601-partition-t.csv", "run20240601-partition-plot.gp"]
        plot = (tmp_path / "run20240601-partition-plot.gp").read_text()
        assert '"run20240601-partition-t.csv" using 1:2' in plot

    def test_manifest_echoes_config(self, tmp_path):
        c = ExperimentConfig().replace(physics={"beta": 3.0})
        m = json.loads(emit_outputs(None, c, tmp_path).read_text())
        assert parse_config(m["config"]) == c

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        r = ExperimentResult("partition", tables=[Table("t", ["a"], [[1]])])
        with pytest.raises(OSError, match="file"):
            emit_outputs(r, ExperimentConfig(), blocker / "sub")


class TestCli:
    def test_config_error_exit(self, tmp_path, capsys):
        assert cli.main(["meanfield", "--seed", "-1", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
        assert cli.main(["nosuch"]) == cli.EXIT_CONFIG
        assert cli.main(["partition", "--config", write(tmp_path, "[x]\n")]) == cli.EXIT_CONFIG

    def test_numerical_failure_exit(self, tmp_path):
        # too few Hermite modes for free transport on [0, 1]
        cfg = write(tmp_path, "[numerics]\nN_hermite = 16\nvlasov_T = 1.0\nvlasov_dt = 0.01\nvolterra_dt = 0.01\n")
        assert cli.main(["vlasov-check", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_FAILED

    def test_success_exit_and_files(self, tmp_path):
        cfg = write(tmp_path, TINY_THEOREM1)
        out = tmp_path / "o"
        assert cli.main(["theorem1", "--config", cfg, "--out", str(out), "--seed", "11"]) == cli.EXIT_OK
        names = {p.name for p in out.iterdir()}
        for stem in ("marginals.csv", "vlasov_modes.csv", "discrepancy.csv"):
            assert f"run11-theorem1-{stem}" in names
        assert "run11-manifest.json" in names
        m = json.loads((out / "run11-manifest.json").read_text())
        assert m["seeds"][0]["master"] == 11
        with open(out / "run11-theorem1-discrepancy.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2 * 4  # N values times panel size, one time

    def test_worker_count_invariance(self, tmp_path):
        cfg = write(tmp_path, TINY_THEOREM1)
        for w in (1, 2):
            assert cli.main(["theorem1", "--config", cfg, "--out", str(tmp_path / f"w{w}"),
                             "--workers", str(w)]) == cli.EXIT_OK
        a = json.loads((tmp_path / "w1" / "run20240601-manifest.json").read_text())["files"]
        b = json.loads((tmp_path / "w2" / "run20240601-manifest.json").read_text())["files"]
        assert [f["sha256"] for f in a] == [f["sha256"] for f in b]
        for f in a:
            if f["name"].endswith(".csv"):
                assert (tmp_path / "w1" / f["name"]).read_bytes() == (tmp_path / "w2" / f["name"]).read_bytes()

    def test_seed_changes_output(self, tmp_path):
        cfg = write(tmp_path, TINY_THEOREM1)
        for s in (1, 2):
            cli.main(["theorem1", "--config", cfg, "--out", str(tmp_path), "--seed", str(s)])
        a = (tmp_path / "run1-theorem1-marginals.csv").read_bytes()
        b = (tmp_path / "run2-theorem1-marginals.csv").read_bytes()
        assert a != b
