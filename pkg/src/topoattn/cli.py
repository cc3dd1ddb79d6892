"""Command-line entry point: ``topoattn <command> ...``.

Exit codes: 0 success, 1 validation or verification failure, 2 usage error.
Every command writes ``<command>.manifest.json`` next to its outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from topoattn import __version__
from topoattn.attnops import (
    AttentionTensor,
    Granularity,
    SharpenConfig,
    budget,
    parse_targets,
    sharpen_tensor,
    validate_tensor,
)
from topoattn.calib import CalibrationItem, CalibrationSpec, ObjectiveKind, calibrate
from topoattn.graphtext import (
    GraphError,
    TokenAdjacency,
    TokenizedSerialization,
    aggregate_edges,
    build_token_adjacency,
    load_graph,
    serialize,
)
from topoattn.headscan import (
    DegeneratePopulationError,
    SelectionResult,
    concentration_score,
    head_features,
    matrix_entropy,
    select_heads,
)
from topoattn.pgm import overlay, write_pgm
from topoattn.spectral import run_suite
from topoattn.synthmodel import GeneratorSpec, adjacency_for, generate, planted_truth
from topoattn.tensorio import TensorFormatError, export_csv, read_tensor, write_tensor

log = logging.getLogger("topoattn")


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    pass


class Run:
    """Collects inputs/outputs of one invocation and writes its manifest."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []

    def input(self, path: str) -> Path:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"input file not found: {path}")
        self.inputs.append(p)
        return p

    def write_json(self, name: str, data) -> Path:
        path = self.out / name
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        self.outputs.append(path)
        return path

    def add(self, path: Path) -> Path:
        self.outputs.append(path)
        return path

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.command.encode())
        settings = {
            k: v for k, v in sorted(vars(self.args).items())
            if k not in ("out", "func", "verbose")
        }
        h.update(json.dumps(settings, sort_keys=True, default=str).encode())
        for p in self.inputs:
            h.update(p.read_bytes())
        return h.hexdigest()

    def finish(self) -> Path:
        manifest = {
            "command": self.command,
            "input_paths": [str(p) for p in self.inputs],
            "output_paths": [str(p) for p in self.outputs],
            "seed": getattr(self.args, "seed", None),
            "config_digest": self.digest(),
            "tool_version": __version__,
        }
        path = self.out / f"{self.command}.manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


def _span(text: Optional[str]) -> Optional[tuple[int, int]]:
    if text is None:
        return None
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise UsageError(f"--span must look like START:END, got {text!r}") from None


def _load_tensor(run: Run, path: str) -> AttentionTensor:
    t = read_tensor(run.input(path))
    span = _span(getattr(run.args, "span", None))
    if span is not None:
        t = AttentionTensor(t.maps, span[0], span[1], t.label)
    report = validate_tensor(t)
    if not report.ok:
        raise ValidationFailure(f"invalid attention tensor {path}:\n{report.summary()}")
    return t


def adjacency_record(adj: TokenAdjacency) -> dict:
    return {
        "span_start": adj.span_start,
        "span_end": adj.span_end,
        "n": adj.n,
        "serialization": adj.serialization.to_dict(),
        "in_region": np.argwhere(adj.in_region).tolist(),
        "out_region": np.argwhere(adj.out_region).tolist(),
    }


def load_adjacency(path: Path, n: Optional[int] = None) -> TokenAdjacency:
    data = json.loads(path.read_text())
    ser = TokenizedSerialization.from_dict(data["serialization"])
    ser.check()
    span_start = int(data.get("span_start", 0))
    if n is not None and span_start + len(ser) > n:
        raise ValidationFailure(
            f"dimension mismatch: serialization needs {span_start + len(ser)} tokens, tensor has n={n}"
        )
    return build_token_adjacency(ser, span_start=span_start, n=n if n is not None else data.get("n"))


def _load_adj_for(run: Run, path: str, t: AttentionTensor) -> TokenAdjacency:
    adj = load_adjacency(run.input(path), t.n)
    if (adj.span_start, adj.span_end) != (t.span_start, t.span_end):
        log.warning(
            "adjacency span [%d,%d) differs from tensor span [%d,%d); using the adjacency",
            adj.span_start, adj.span_end, t.span_start, t.span_end,
        )
    return adj


def _write_tensor(run: Run, t: AttentionTensor, stem: str) -> None:
    run.add(run.out / f"{stem}.slsh")
    write_tensor(t, run.out / f"{stem}.slsh")
    if run.args.format == "csv":
        run.outputs += export_csv(t, run.out / f"{stem}_csv")


def cmd_serialize(args) -> int:
    run = Run("serialize", args)
    g = load_graph(run.input(args.graph).read_bytes())
    if args.aggregate:
        g = aggregate_edges(g)
    ser = serialize(g)
    if not ser.tokens:
        raise ValidationFailure("graph has no edges; nothing to serialize")
    span = _span(args.span)
    start = 0 if span is None else span[0]
    if span is not None and span[1] - span[0] != len(ser):
        raise ValidationFailure(f"--span covers {span[1] - span[0]} tokens, serialization has {len(ser)}")
    adj = build_token_adjacency(ser, span_start=start)
    run.write_json("tokens.json", ser.to_dict())
    run.write_json("adjacency.json", adjacency_record(adj))
    run.add(write_pgm(run.out / "mgt.pgm", adj.mask))
    print(ser.text)
    run.finish()
    return 0


def cmd_synth(args) -> int:
    run = Run("synth", args)
    spec = GeneratorSpec.from_json(run.input(args.spec).read_text()) if args.spec else GeneratorSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    args.seed = spec.seed
    t = generate(spec)
    _write_tensor(run, t, "tensor")
    run.write_json("adjacency.json", adjacency_record(adjacency_for(spec)))
    run.write_json("spec.json", spec.to_dict())
    run.write_json("truth.json", {"planted": sorted([l, h] for l, h in planted_truth(spec))})
    run.finish()
    return 0


def cmd_analyze(args) -> int:
    run = Run("analyze", args)
    t = _load_tensor(run, args.tensor)
    adj = _load_adj_for(run, args.adjacency, t)
    heads = []
    for l, h in t.head_ids():
        A = t.maps[l, h]
        conc = concentration_score(head_features(A, adj)[1], adj)
        heads.append({
            "layer": l,
            "head": h,
            "entropy": matrix_entropy(A),
            "concentration": conc.c,
            "e_in": conc.e_in,
            "e_out": conc.e_out,
            "budget": budget(A, adj).to_dict(),
        })
    report = {"n": t.n, "span": [adj.span_start, adj.span_end], "heads": heads, "warnings": []}
    try:
        sel = select_heads(t, adj, args.log_base)
        report["T_S"] = sel.entropy_threshold
        report["T_C"] = sel.concentration_threshold
        report["selected"] = sorted([l, h] for l, h in sel.selected_heads)
    except DegeneratePopulationError as exc:
        report["warnings"].append(str(exc))
        log.warning("%s", exc)
    run.write_json("report.json", report)
    run.finish()
    return 0


def cmd_select(args) -> int:
    run = Run("select", args)
    t = _load_tensor(run, args.tensor)
    adj = _load_adj_for(run, args.adjacency, t)
    try:
        sel = select_heads(t, adj, args.log_base)
    except DegeneratePopulationError as exc:
        raise ValidationFailure(str(exc)) from None
    run.write_json("selection.json", sel.to_dict())
    for l, h in sorted(sel.selected_heads):
        print(f"{l}:{h}")
    run.finish()
    return 0


def _targets(args, run: Run) -> frozenset:
    granularity = Granularity(args.granularity)
    if args.targets:
        return parse_targets(args.targets, granularity)
    if args.selection:
        sel = SelectionResult.from_dict(json.loads(run.input(args.selection).read_text()))
        return frozenset(sel.selected_layers if granularity is Granularity.LAYER else sel.selected_heads)
    raise UsageError("give --targets or --selection")


def cmd_sharpen(args) -> int:
    run = Run("sharpen", args)
    t = _load_tensor(run, args.tensor)
    cfg = SharpenConfig(args.gamma, args.granularity, _targets(args, run))
    try:
        res = sharpen_tensor(t, cfg)
    except IndexError as exc:
        raise ValidationFailure(str(exc)) from None
    _write_tensor(run, res.tensor, "sharpened")
    skipped = {f"{l}:{h}": c for (l, h), c in sorted(res.degenerate_rows.items()) if c}
    run.write_json("sharpen.json", {"gamma": args.gamma, "granularity": cfg.granularity.value,
                                    "targets": sorted(list(x) if isinstance(x, tuple) else x for x in cfg.targets),
                                    "degenerate_rows": skipped})
    run.finish()
    return 0


def cmd_verify(args) -> int:
    run = Run("verify", args)
    checks = run_suite(seeds=args.seeds, base_seed=args.seed or 0)
    run.write_json("verify.json", {"checks": [c.to_dict() for c in checks],
                                   "passed": all(c.passed for c in checks)})
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} rel_err={c.rel_err:.3e}")
    run.finish()
    return 0 if all(c.passed for c in checks) else 1


def cmd_calibrate(args) -> int:
    run = Run("calibrate", args)
    sel = SelectionResult.from_dict(json.loads(run.input(args.selection).read_text()))
    items = []
    for spec in args.item:
        tpath, sep, apath = spec.partition(":")
        if not sep:
            raise UsageError(f"--item must be TENSOR:ADJACENCY, got {spec!r}")
        t = _load_tensor(run, tpath)
        items.append(CalibrationItem(t, _load_adj_for(run, apath, t)))
    grid = [float(x) for x in args.grid.split(",")] if args.grid else None
    cspec = CalibrationSpec(
        items=items,
        objective=ObjectiveKind(args.objective),
        scorer_command=args.scorer,
        granularity=args.granularity,
        **({"gamma_grid": grid} if grid else {}),
    )
    result = calibrate(cspec, sel)
    run.write_json("calibration.json", result.to_dict())
    print(f"best_gamma={result.best_gamma}")
    run.finish()
    return 0


def cmd_render(args) -> int:
    run = Run("render", args)
    if not args.tensor and not args.adjacency:
        raise UsageError("render needs --tensor and/or --adjacency")
    t = _load_tensor(run, args.tensor) if args.tensor else None
    adj = None
    if args.adjacency:
        adj = _load_adj_for(run, args.adjacency, t) if t is not None else load_adjacency(run.input(args.adjacency))
        run.add(write_pgm(run.out / "mgt.pgm", adj.mask))
    if t is not None:
        if args.heads:
            heads = sorted(parse_targets(args.heads, Granularity.HEAD))
        elif args.selection:
            heads = sorted(SelectionResult.from_dict(json.loads(run.input(args.selection).read_text())).selected_heads)
        else:
            heads = t.head_ids()
        for l, h in heads:
            if not (0 <= l < t.layers and 0 <= h < t.heads):
                raise ValidationFailure(f"head {l}:{h} outside tensor")
            run.add(write_pgm(run.out / f"attn_l{l}_h{h}.pgm", t.maps[l, h]))
            if adj is not None:
                _, closed = head_features(t.maps[l, h], adj)
                run.add(write_pgm(run.out / f"mask_l{l}_h{h}.pgm", closed))
                run.add(write_pgm(run.out / f"overlay_l{l}_h{h}.pgm", overlay(adj.mask, closed)))
    run.finish()
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="topoattn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("serialize", parents=[common], help="serialize a graph and build M_gt")
    s.add_argument("graph")
    s.add_argument("--aggregate", action="store_true", help="group edges by source node")
    s.add_argument("--span", help="START:END placement of the edge tokens")
    s.set_defaults(func=cmd_serialize)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic tensor")
    s.add_argument("spec", nargs="?", help="GeneratorSpec JSON (defaults if omitted)")
    s.set_defaults(func=cmd_synth)

    for name, func, helptext in (
        ("analyze", cmd_analyze, "per-head entropy, concentration and budget"),
        ("select", cmd_select, "select topology-aware heads"),
    ):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("tensor")
        s.add_argument("adjacency")
        s.add_argument("--span", help="override the tensor's START:END span")
        s.add_argument("--log-base", type=float, default=None)
        s.set_defaults(func=func)

    s = sub.add_parser("sharpen", parents=[common], help="apply sink sharpening")
    s.add_argument("tensor")
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--granularity", choices=("head", "layer"), default="layer")
    s.add_argument("--targets", help="layers '1,2' or heads '1:3,2:0'")
    s.add_argument("--selection", help="selection.json from 'select'")
    s.add_argument("--span", help="override the tensor's START:END span")
    s.set_defaults(func=cmd_sharpen)

    s = sub.add_parser("verify", parents=[common], help="numeric checks of the sink geometry")
    s.add_argument("--seeds", type=int, default=20)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("calibrate", parents=[common], help="grid-search gamma")
    s.add_argument("selection")
    s.add_argument("--item", action="append", required=True, help="TENSOR:ADJACENCY, repeatable")
    s.add_argument("--grid", help="comma-separated gamma values")
    s.add_argument("--objective", choices=[k.value for k in ObjectiveKind], default="adjacency_f1")
    s.add_argument("--scorer", help="external scorer command for --objective custom")
    s.add_argument("--granularity", choices=("head", "layer"), default="layer")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("render", parents=[common], help="PGM heatmaps and masks")
    s.add_argument("--tensor")
    s.add_argument("--adjacency")
    s.add_argument("--heads", help="heads 'l:h,...' (default: selection or all)")
    s.add_argument("--selection")
    s.set_defaults(func=cmd_render)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValidationFailure, GraphError, TensorFormatError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
