import os
import subprocess
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def test_benchmark_script_runs():
    out = subprocess.run([sys.executable, os.path.join(ROOT, "benchmarks", "bench_kernels.py"),
                          "--nodes", "30", "--pairs", "500", "--dim", "8", "--walk-length", "10",
                          "--repeat", "1"], capture_output=True, text=True, check=True)
    lines = out.stdout.strip().splitlines()
    assert lines[-2].startswith("uniform_walks") and lines[-1].startswith("sgns_block")
