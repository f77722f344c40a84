"""Reduced-MNIST comparison of sL-BFGS-TR, sL-SR1-TR and Adam.

Runs the three shipped configs (1000 training samples, overlap 50, memory
20, 10 epochs) and prints the per-epoch training accuracy.

    python3 demos/mnist.py
"""
from pathlib import Path

from sqntr.cli import RunSpec
from sqntr import train

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

curves = {}
for name in ("mnist_slbfgs.json", "mnist_slsr1.json", "mnist_adam.json"):
    spec = RunSpec.load(CONFIGS / name)
    obj, test_obj = spec.build_objectives()
    res = train(spec.config, obj, test_obj=test_obj)
    last = {}
    for rec in res.records:
        last[rec.epoch] = rec
    curves[spec.config.method] = last
    final = res.records[-1]
    print(f"{spec.config.method:10s} train {final.train_acc:5.1f}%  test {final.test_acc:5.1f}%  "
          f"{len(res.records)} iterations  {final.wall_time_s:.1f}s")

print("\ntraining accuracy at the end of each epoch")
methods = list(curves)
print("epoch " + " ".join(f"{m:>10s}" for m in methods))
for epoch in sorted(curves[methods[0]]):
    print(f"{epoch:5d} " + " ".join(f"{curves[m][epoch].train_acc:10.1f}" for m in methods))
