import importlib.util
import json
from pathlib import Path

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


def test_benchmark_smoke(tmp_path, capsys):
    spec = importlib.util.spec_from_file_location("bench_kernels", BENCH)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    out = tmp_path / "bench.json"
    assert mod.main(["--relations", "5", "--dim", "4", "--repeats", "1", "--json", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert "python" in doc["results"]
    if "cython" in doc["results"]:
        assert doc["walks_identical"]
        assert doc["vectors_max_abs_diff"] < 1e-8
    assert "backend" in capsys.readouterr().out
