"""Train a small quantized CNN with a learned precision allocation.

Generates (or reuses) the rendered-digit dataset, trains one learned-arm
and one uniform-arm network at a 10-bit budget on a small slice, and prints
the per-epoch error alongside the allocation trajectory. Expect a couple of
minutes on one CPU core.
"""

import os

from stochprec import mnist
from stochprec.config import ExperimentConfig
from stochprec.network import train

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data", "standin")


def run(cfg, train_set, test_set):
    print(f"\n=== {cfg.name} ===")
    _, history, alloc = train(cfg, train_set=train_set, test_set=test_set)
    for row in history:
        if row[1] != "val":
            continue
        epoch, _, err, _, tau = row[:5]
        bits = row[5:10]
        print(f"epoch {epoch}  val err {100 * err:5.2f}%  tau {tau:7.2f}  "
              "bits " + " ".join(f"{b:.2f}" for b in bits))
    print("final allocation:", " ".join(str(int(round(b))) for b in alloc))


def main():
    mnist.ensure_dataset(DATA_DIR)
    train_set = mnist.load_dir(DATA_DIR, "train")
    test_set = mnist.load_dir(DATA_DIR, "test")
    common = dict(epochs=5, seed=0, train_limit=4000, batch_size=64,
                  output_dir=os.path.join("runs", "demo"))
    run(ExperimentConfig(arm="manual", bits="22222", **common), train_set, test_set)
    run(ExperimentConfig(arm="learned", budget=10, **common), train_set, test_set)


if __name__ == "__main__":
    main()
