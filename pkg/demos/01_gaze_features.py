"""Walk through one scripted head turn: signals, velocities, the 21 features, and a classifier."""
from __future__ import annotations

# %% A single interactor glances at the robot at t = 6 s, 1.2 m away.
import numpy as np

from socialgate import gbdt, sim
from socialgate.features import FEATURE_NAMES, track_windows, velocities, window_signals

spec = sim.ScenarioSpec("demo", 12.0, (
    sim.Actor("p1", ((0.0, 1.2), (12.0, 1.2)), (sim.HeadTurn(6.0, "toward", 0.5, 0.6),)),
), noise=0.0)
episode, truth = sim.synthesize(spec)
print("preambles:", truth.tracks["p1"].preambles, "gate kind:", truth.tracks["p1"].gate_kind)

# %% Velocity is zero in quiet windows and peaks inside the turn window.
for w in track_windows(episode)["p1"]:
    v = velocities(window_signals(w))
    print(f"window {w.start:4.1f}s  peak |velocity| {np.abs(v).max():.4f}")

# %% Train with the default hyperparameters on 200 random scenarios, test on 100 more.
train = sim.build_training_set(sim.training_suite(200, seed=100))
held = sim.build_training_set(sim.training_suite(100, seed=200, prefix="held"))
model = gbdt.fit(train, gbdt.TrainConfig())
m = gbdt.evaluate(model, held)
print(f"held-out F1 {m.f1:.3f}  AUC {m.roc_auc:.3f}  confusion {m.confusion}")

# %% Which features carry the signal: mean class difference in pooled-std units.
pos, neg = train.X[train.y == 1], train.X[train.y == 0]
effect = (pos.mean(0) - neg.mean(0)) / (train.X.std(0) + 1e-12)
for i in np.argsort(-np.abs(effect))[:5]:
    print(f"{FEATURE_NAMES[i]:<32} {effect[i]:+.2f}")
