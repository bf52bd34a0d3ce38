"""Stage II decision paths driven by scripted VLM replies."""
from __future__ import annotations

# %% Script one interactor with 0, 1 or 2 dissenting analyses and run both strategies.
import tempfile

from socialgate import sim
from socialgate.backends import MockBackend
from socialgate.gate import GAZE, TriggerEvent
from socialgate.orchestrator import StageTwoConfig, Strategy, run_stage_two

spec = sim.ScenarioSpec("demo", 12.0, (
    sim.Actor("p1", ((0.0, 1.2), (12.0, 1.2)), (sim.HeadTurn(6.0, "toward", 0.5, 0.6),)),))
_, truth = sim.synthesize(spec)
event = TriggerEvent("p1", GAZE, 6.0, (4.0, 10.0), 0.97, (), "demo")

for dissent, critique in ((0, "resolve"), (1, "resolve"), (2, "resolve"), (2, "inconclusive")):
    root = tempfile.mkdtemp()
    sim.script_mock_backend(spec, truth, root, dissent=dissent, critique=critique)
    for strategy in Strategy:
        backend = MockBackend(root)
        decision, bundle = run_stage_two(event, backend, StageTwoConfig(strategy=strategy))
        print(f"dissent {dissent} ({critique:<12}) {strategy.value:<15} u_sc {bundle.u_sc:.1f} "
              f"-> {decision.action:<8} {decision.provenance.value:<20} requests {backend.call_count}")

# %% The majority-vote reply the mock returns for one dissenting sample.
print(sim.majority_vote_reply(sim.scripted_samples("interactor", 5, 1), 5))
