"""Shared fixtures: tiny reference CSVs produced through the runner CLI.

The figure package only ever sees experiment output files, so the
fixtures generate real ones by invoking `robust_thp` as a subprocess,
exactly as a user would.
"""

import subprocess
import sys
import textwrap

import pytest

SPEC_TEMPLATES = {
    "sweep-power": """\
        [experiment]
        kind = sweep-power
        output = sweep-power.csv
        channels = 1
        seed = 3

        [system]
        n_tx = 4
        n_rx = 2 2
        n_streams = 2 2
        noise_var = 0.1

        [design]
        error_var = 0.05
        max_iters = 2

        [sweep]
        values = 0 3 6 9 12

        [evaluation]
        error_draws = 2
        """,
    "sweep-sigma": """\
        [experiment]
        kind = sweep-sigma
        output = sweep-sigma.csv
        channels = 1
        seed = 3

        [system]
        n_tx = 4
        n_rx = 2 2
        n_streams = 2 2
        noise_var = 0.1

        [design]
        power_limit_db = 10
        max_iters = 2

        [sweep]
        values = 0.05 0.1

        [evaluation]
        error_draws = 2
        """,
    "sweep-delta": """\
        [experiment]
        kind = sweep-delta
        output = sweep-delta.csv
        channels = 1
        seed = 3

        [system]
        n_tx = 4
        n_rx = 2 2
        n_streams = 2 2
        noise_var = 0.1

        [design]
        power_limit_db = 10
        max_iters = 2

        [sweep]
        values = 0.05 0.1
        """,
    "power-vs-eta": """\
        [experiment]
        kind = power-vs-eta
        output = power-vs-eta.csv
        channels = 1
        seed = 3

        [system]
        n_tx = 4
        n_rx = 2 2
        n_streams = 2 2
        noise_var = 0.1

        [design]
        delta = 0.1
        max_iters = 2

        [sweep]
        values = 0.5 0.7
        """,
    "feasibility": """\
        [experiment]
        kind = feasibility
        output = feasibility.csv
        channels = 2
        seed = 3

        [system]
        n_tx = 4
        n_rx = 2 2
        n_streams = 2 2
        noise_var = 0.1

        [design]
        mse_targets = 0.5

        [sweep]
        values = 0.08
        """,
    "convergence": """\
        [experiment]
        kind = convergence
        output = convergence.csv
        channels = 1
        seed = 3

        [system]
        n_tx = 4
        n_rx = 2 2
        n_streams = 2 2
        noise_var = 0.1

        [design]
        delta = 0.1
        max_iters = 2

        [sweep]
        values = 0.5 0.3
        """,
    "balance": """\
        [experiment]
        kind = balance
        output = balance.csv
        channels = 1
        seed = 3

        [system]
        n_tx = 4
        n_rx = 2 2
        n_streams = 2 2
        noise_var = 0.1

        [design]
        delta = 0.1
        max_iters = 2
        power_limit_db = 6

        [sweep]
        values = 6
        """,
}


def run_experiment_cli(spec_path, output_dir):
    proc = subprocess.run(
        [sys.executable, "-m", "robust_thp", "run",
         "--spec", str(spec_path), "--output-dir", str(output_dir)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc.stdout.strip()


@pytest.fixture(scope="session")
def reference_csvs(tmp_path_factory):
    """kind -> path of a small result CSV generated through the runner."""
    outdir = tmp_path_factory.mktemp("reference")
    paths = {}
    for kind, body in SPEC_TEMPLATES.items():
        spec_path = outdir / f"{kind}.cfg"
        spec_path.write_text(textwrap.dedent(body))
        paths[kind] = run_experiment_cli(spec_path, outdir)
    return paths
