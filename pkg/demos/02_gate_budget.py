"""Stage I on the 30-scene benchmark: how many VLM calls it saves and how it times them."""
from __future__ import annotations

# %% Train a classifier, then replay the benchmark scenes through the gate.
from socialgate import gbdt, sim
from socialgate.gate import run_stage_one
from socialgate.pipeline import baseline_distance_only, timing_category

model = gbdt.fit(sim.build_training_set(sim.training_suite(200, seed=100)), gbdt.TrainConfig())
results = [run_stage_one(sim.synthesize(spec)[0], model) for spec in sim.benchmark_suite(30, seed=1)]
calls = sum(r.budget.vlm_events for r in results)
windows = sum(r.budget.exhaustive_calls for r in results)
far = sum(r.budget.excluded_far for r in results)
print(f"trigger events {calls} vs exhaustive {windows} ({calls / windows:.1%}); far windows skipped {far}")

# %% Early gazers: the gate fires at the glance, the distance-only baseline at zone entry.
rows = []
for spec in sim.timing_suite(12, seed=2):
    ep, gt = sim.synthesize(spec)
    ref = gt.tracks["p1"].preambles[0]
    gate_events = run_stage_one(ep, model).events["p1"]
    base_events = baseline_distance_only(ep)
    rows.append((timing_category(gate_events, ref, ep.start, 2.0),
                 timing_category(base_events, ref, ep.start, 2.0)))
for label in ("on_time", "late", "missed"):
    print(f"{label:<8} two-stage {sum(a == label for a, _ in rows):>2}  baseline {sum(b == label for _, b in rows):>2}")
