"""Explicit-format interval model export for external model checkers.

Two plain-text files:

- states file: one line per state, `INDEX` optionally followed by a label
  (`goal`, `critical`, `absorbing`);
- transitions file: one line per interval transition,
  `SRC ACT DST [LO,HI]`, with actions densely re-indexed per source state,
  lines ordered by source ascending, action ascending, destination ascending,
  and interval endpoints printed with 6 significant digits.

Sinks are exported with a [1,1] self-loop so every state has a choice. Import
keeps the interval strings verbatim, so export -> import -> export is
byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

from .abstraction import DEADLOCK, Imdp, StateKind


@dataclass
class ExplicitModel:
    """Parsed explicit model: state labels plus string-precision transitions."""

    labels: list          # per state: "" | "goal" | "critical" | "absorbing"
    transitions: list     # (src, act, dst, lo_str, hi_str), already ordered


def _sig6(x: float) -> str:
    return f"{float(x):.6g}"


def model_from_imdp(imdp: Imdp) -> ExplicitModel:
    labels = []
    for s in imdp.states:
        if s.kind is StateKind.GOAL:
            labels.append("goal")
        elif s.kind is StateKind.CRITICAL:
            labels.append("critical")
        elif s.kind is StateKind.ABSORBING:
            labels.append("absorbing")
        else:
            labels.append("")
    transitions = []
    for si, state in enumerate(imdp.states):
        if state.kind is not StateKind.REGION:
            transitions.append((si, 0, si, "1", "1"))
            continue
        acts = imdp.actions.get(si, ())
        keys = list(acts) if acts else [DEADLOCK]
        for ai, a in enumerate(keys):
            row = imdp.rows[imdp.row_of[(si, a)]]
            order = row.succ.argsort()
            for j in order:
                transitions.append((si, ai, int(row.succ[j]),
                                    _sig6(row.lo[j]), _sig6(row.hi[j])))
    return ExplicitModel(labels=labels, transitions=transitions)


def write_explicit(model: ExplicitModel, states_path, transitions_path) -> None:
    with open(states_path, "w", newline="\n") as fh:
        for i, label in enumerate(model.labels):
            fh.write(f"{i} {label}\n" if label else f"{i}\n")
    with open(transitions_path, "w", newline="\n") as fh:
        for src, act, dst, lo, hi in model.transitions:
            fh.write(f"{src} {act} {dst} [{lo},{hi}]\n")


def export_explicit(imdp: Imdp, states_path, transitions_path) -> ExplicitModel:
    model = model_from_imdp(imdp)
    write_explicit(model, states_path, transitions_path)
    return model


def import_explicit(states_path, transitions_path) -> ExplicitModel:
    labels = []
    with open(states_path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if int(parts[0]) != len(labels):
                raise ValueError("states file indices must be dense and ascending")
            labels.append(parts[1] if len(parts) > 1 else "")
    transitions = []
    with open(transitions_path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            src, act, dst = int(parts[0]), int(parts[1]), int(parts[2])
            interval = parts[3]
            if not (interval.startswith("[") and interval.endswith("]")):
                raise ValueError(f"malformed interval {interval!r}")
            lo, hi = interval[1:-1].split(",")
            transitions.append((src, act, dst, lo, hi))
    return ExplicitModel(labels=labels, transitions=transitions)
