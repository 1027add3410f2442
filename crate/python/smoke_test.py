"""Smoke test of the Python bindings: simulate, analyze, compare."""

import sys
import tempfile
from pathlib import Path

import ibgp_transient as it


def main() -> int:
    assert "path3" in it.presets()
    scn = it.Scenario.preset("path3")
    assert scn.name == "path3" and scn.samples == 1
    assert it.Scenario.from_toml(scn.to_toml()).hash == scn.hash

    totals = [row["total_us"] for row in scn.propagation()]
    assert totals == [60_000, 60_000, 60_000], totals

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        sim = it.simulate(scn, trace_dir=tmp)
        assert sim.all_valid, sim.excluded
        r2 = next(r for r in sim.rows if r["router"] == "r2")
        exact = sum(iv["end"] - iv["start"] for iv in r2["exact"])
        assert exact == 3 * 100_000 + 60_000, exact

        trace = tmp / "sample-000.trace"
        assert it.validate(trace, tmp / "mapping.toml") == []
        ana = it.analyze([trace], tmp / "mapping.toml")
        strip = lambda rows: [{k: v for k, v in r.items() if k != "exact"} for r in rows]
        assert strip(ana.rows) == strip(sim.rows)
        assert ana.pooled == sim.pooled

        sim.write(tmp / "report")
        assert it.Report.load(tmp / "report" / "report.json").pooled == sim.pooled

    fast = scn.with_overrides(per_prefix_cost_us=10_000, rate_pps=10_000)
    print(f"{fast!r}: median {it.simulate(fast).pooled['q50'] / 1000:.3f} ms")
    print("python smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
