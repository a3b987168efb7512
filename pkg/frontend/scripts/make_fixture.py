"""Regenerate tests/fixtures/walkthrough.json from the real service.

Run from the repository root with the python package installed:

    python3 frontend/scripts/make_fixture.py

The fixture freezes the server's responses for a fixed trial seed and a
fixed 12-cohort outcome sequence; the UI tests assert the displayed
decisions and next doses match these strings byte-for-byte.
"""

import json
import pathlib
import tempfile

from fastapi.testclient import TestClient

from keytrial.service import create_app

CONFIG = {
    "rows": 3, "cols": 5, "phi": 0.3, "eps1": 0.05, "eps2": 0.05,
    "max_n": 60, "cohort_size": 1, "cutoff": 0.95, "algorithm": "key1",
    "seed": 20240809,
}
DLT_SEQUENCE = [0, 0, 0, 1, 1, 0, 1, 1, 0, 0, 1, 0]

out = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"
out.mkdir(parents=True, exist_ok=True)

with tempfile.TemporaryDirectory() as tmp:
    client = TestClient(create_app(tmp))
    created = client.post("/trials", json=CONFIG)
    created.raise_for_status()
    trial = created.json()
    steps = []
    revision = trial["revision"]
    for dlt in DLT_SEQUENCE:
        resp = client.post(
            f"/trials/{trial['id']}/cohorts",
            json={"dlt_count": dlt, "expected_revision": revision},
        )
        resp.raise_for_status()
        body = resp.json()
        revision = body["trial"]["revision"]
        steps.append({
            "dlt": dlt,
            "decision": body["decision"],
            "next_dose": body["next_dose"],
            "newly_eliminated": body["newly_eliminated"],
            "status": body["status"],
            "revision": revision,
            "state": body["trial"]["state"],
        })
    finalized = client.post(f"/trials/{trial['id']}/finalize",
                            json={"force": True})
    finalized.raise_for_status()
    table = client.get(f"/trials/{trial['id']}/decision-table")
    table.raise_for_status()

doc = {
    "config": CONFIG,
    "dlt_sequence": DLT_SEQUENCE,
    "initial_state": trial["state"],
    "steps": steps,
    "selection": finalized.json()["selection"],
    "decision_table": table.json(),
}
(out / "walkthrough.json").write_text(json.dumps(doc, indent=2) + "\n")
print(f"wrote {out / 'walkthrough.json'} with {len(steps)} cohorts")
