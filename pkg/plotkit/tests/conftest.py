import subprocess
import sys
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[2]
ARTIFACTS = REPO / "artifacts" / "acceptance"
SCENARIO = REPO / "src" / "vtolnav" / "scenarios" / "baseline.toml"

COLUMNS = ("t,x,y,z,phi,theta,psi,vx,vy,vz,thrust,"
           "u1,u2,u3,u4,v1,v2,v3,v4,h_min,dist_min,cost,"
           "solver_status,solver_iters,solve_ms")


def make_csv(path, rows):
    """Write a schema-conformant run CSV from (t, x, y, z, dist_min) tuples."""
    lines = [COLUMNS]
    for t, x, y, z, dist in rows:
        h = dist * dist - 1.0
        lines.append(
            f"{t:.9g},{x:.9g},{y:.9g},{z:.9g},0,0,0,0,0,0,6.867,"
            f"0,0,0,0,0,0,0,0,{h:.9g},{dist:.9g},1.5,optimal,3,12.5")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="session")
def baseline_csv(tmp_path_factory):
    """The reference run CSV: reuse the acceptance artifact when present,
    otherwise produce one through the simulator CLI."""
    existing = ARTIFACTS / "baseline_cbf.csv"
    if existing.exists():
        return existing
    out = tmp_path_factory.mktemp("runs")
    subprocess.run(
        [sys.executable, "-m", "vtolnav.cli", "run",
         "--scenario", str(SCENARIO), "--out", str(out)],
        check=True, capture_output=True, text=True)
    produced = list(out.glob("*.csv"))
    assert len(produced) == 1
    return produced[0]
