"""Experiment configuration (flat key=value files) and result summaries."""

import csv
import statistics
from collections import Counter
from dataclasses import dataclass, fields


def parse_allocation(s):
    """Parse a manual per-layer bit string like "22222" or "10,2,2"."""
    s = s.strip()
    if "," in s:
        parts = [p.strip() for p in s.split(",")]
    else:
        parts = list(s)
    if not parts:
        raise ValueError("empty allocation string")
    bits = []
    for p in parts:
        if not p.isdigit():
            raise ValueError(f"invalid allocation entry {p!r} in {s!r}")
        v = int(p)
        if v == 0:
            raise ValueError(f"0-bit layer in allocation {s!r}")
        bits.append(v)
    return bits


@dataclass
class ExperimentConfig:
    dataset_dir: str = "data"
    arm: str = "learned"  # "manual" | "learned"
    bits: str = ""  # manual arm: per-layer allocation string
    budget: int = 10  # learned arm: total bits
    epochs: int = 6
    batch_size: int = 64
    seed: int = 0
    lr: float = 1e-3
    logit_lr: float = 1e-3
    tau0: float = 50.0
    tau_min: float = 0.01
    decay_rate: float = 0.0  # 0 -> anneal tau0 down to tau_min over the run
    hard_threshold: float = 3.0
    hard_trials: int = 10_000
    train_limit: int = 0  # 0 -> full training set
    output_dir: str = "runs"

    def __post_init__(self):
        if self.arm not in ("manual", "learned"):
            raise ValueError(f"arm must be 'manual' or 'learned', got {self.arm!r}")
        if self.arm == "manual":
            if not self.bits:
                raise ValueError("manual arm requires a bits string")
            self.budget = sum(parse_allocation(self.bits))
        if self.budget < 1:
            raise ValueError("budget must be positive")

    @property
    def name(self):
        """Run naming in the budget=10_22222 / budget=10_learn convention."""
        suffix = "learn" if self.arm == "learned" else self.bits
        return f"budget={self.budget}_{suffix}"

    def fixed_allocation(self):
        return parse_allocation(self.bits) if self.arm == "manual" else None


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def parse_config(path):
    """Read a flat key=value config file; unknown keys are rejected."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            typ = _FIELD_TYPES[key]
            values[key] = raw if typ is str else typ(raw)
    return ExperimentConfig(**values)


def write_config(cfg, path):
    with open(path, "w") as fh:
        for f in fields(ExperimentConfig):
            fh.write(f"{f.name} = {getattr(cfg, f.name)}\n")


# ----------------------------------------------------------------------
# summaries

SUMMARY_HEADER = ["network", "budget", "val_error", "allocation"]


def write_summary(path, network, budget, val_error, allocation):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        writer.writerow([network, budget, f"{val_error:.6f}",
                         " ".join(str(int(b)) for b in allocation)])


def read_summary(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != 1:
        raise ValueError(f"{path}: expected exactly one summary row, got {len(rows)}")
    row = rows[0]
    return {
        "network": row["network"],
        "budget": int(row["budget"]),
        "val_error": float(row["val_error"]),
        "allocation": row["allocation"],
    }


def summarize(summary_paths):
    """Aggregate per-seed summaries: mean +- sample std of the final val error.

    Groups by network name; every run in a group must agree on the budget.
    Returns rows [network, budget, mean_error, std_error, allocation_mode]
    in first-seen network order (Table-style layout).
    """
    groups = {}
    for path in summary_paths:
        s = read_summary(path)
        groups.setdefault(s["network"], []).append(s)
    out = []
    for network, runs in groups.items():
        budgets = {r["budget"] for r in runs}
        if len(budgets) != 1:
            raise ValueError(f"inconsistent budgets {sorted(budgets)} in group {network}")
        errs = [r["val_error"] for r in runs]
        mean = statistics.fmean(errs)
        std = statistics.stdev(errs) if len(errs) > 1 else 0.0
        alloc_mode = Counter(r["allocation"] for r in runs).most_common(1)[0][0]
        out.append({
            "network": network,
            "budget": budgets.pop(),
            "mean_error": mean,
            "std_error": std,
            "allocation": alloc_mode,
        })
    return out


def format_summary_table(rows):
    lines = [f"{'Network':<22} {'Budget':>6}  {'Val. Error':>16}  Final Bit Allocation"]
    for r in rows:
        lines.append(
            f"{r['network']:<22} {r['budget']:>6}  "
            f"{100 * r['mean_error']:>6.2f}% +- {100 * r['std_error']:.2f}%  "
            f"{r['allocation']}"
        )
    return "\n".join(lines)
