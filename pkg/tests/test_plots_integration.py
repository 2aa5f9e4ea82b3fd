"""Optional cross-component check: the plots CLI renders a figure from a CSV
produced by the runner.  Skipped when node or the built frontend is absent;
the frontend's own vitest suite covers the component in depth.
"""
import os
import shutil
import subprocess
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PLOTS_CLI = os.path.join(ROOT, "frontend", "dist", "cli.js")

needs_frontend = pytest.mark.skipif(
    shutil.which("node") is None or not os.path.exists(PLOTS_CLI),
    reason="node or built frontend not available")


@needs_frontend
def test_plots_renders_runner_output(tmp_path):
    csv_path = tmp_path / "run.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "ailfem.cli", "run", "--problem", "sine_gordon",
         "--m", "1", "--driver", "practical", "--budget", "2e4",
         "--outdir", str(tmp_path), "--csv", str(csv_path)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr

    figure = tmp_path / "figure.svg"
    proc = subprocess.run(
        ["node", PLOTS_CLI, "--input", str(csv_path), "--x", "work",
         "--y", "eta", "--slope", "-0.5", "--output", str(figure)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert figure.stat().st_size > 0
    assert figure.read_text().startswith("<svg")
