"""Drive the matching service against a finished toy run.

Expects the run directory produced by demos/toy_pipeline.py (a run.json
plus checkpoints/reconstructed.pt). Starts the app in-process, walks the
region endpoints, flips the automatic matching, and queues a short
stylization job for style 0.

    python3 demos/matching_service.py toy_run
"""

import sys
import time
from pathlib import Path

from fastapi.testclient import TestClient

from stylefield.service import create_app


def main() -> None:
    if len(sys.argv) != 2:
        raise SystemExit("usage: python3 demos/matching_service.py RUN_DIR")
    run_dir = Path(sys.argv[1])
    client = TestClient(create_app(run_dir))

    scene = client.get("/api/scene/regions").json()
    print(f"scene: {len(scene)} regions")
    for card in scene:
        print(f"  region {card['id']}: area {card['area']:.3f},"
              f" centroid ({card['centroid'][0]:.2f}, {card['centroid'][1]:.2f})")

    style = client.get("/api/style/0/regions").json()
    print(f"style 0: {len(style)} regions")

    matching = client.get("/api/style/0/matching").json()["matching"]
    print(f"auto matching: {matching['assignment']} (cost {matching['cost']:.3f})")

    # Swap two style targets and push the edit back.
    assignment = dict(matching["assignment"])
    keys = sorted(assignment)
    assignment[keys[0]], assignment[keys[-1]] = assignment[keys[-1]], assignment[keys[0]]
    edited = dict(matching, assignment=assignment, mode="custom")
    reply = client.put("/api/style/0/matching", json=edited)
    print(f"custom matching saved: {reply.json()['matching']['assignment']}")

    job = client.post("/api/jobs/stylize", json={"style_index": 0, "iterations": 8})
    job_id = job.json()["job_id"]
    print(f"queued job {job_id}")
    while True:
        state = client.get(f"/api/jobs/{job_id}").json()
        if state["state"] in ("done", "failed"):
            break
        time.sleep(2.0)
    print(f"job {job_id}: {state['state']}")

    image = client.get("/api/renders/latest", params={"style": 0})
    out = run_dir / "service" / "demo_render.png"
    out.write_bytes(image.content)
    print(f"latest render written to {out}")


if __name__ == "__main__":
    main()
