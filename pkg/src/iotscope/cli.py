"""Command-line entry point: ``iotscope <command> ...``.

Exit status is 0 on success, 1 on a domain error (the error class name is
printed) and 2 on a usage error.
"""

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .dataset import (
    CategoryLabel,
    Dataset,
    label_by_device_map,
    load_device_map,
    read_dataset_csv,
    stratified_split,
    write_dataset_csv,
)
from .evaluation import GridSpec, evaluate, grid_search
from .exceptions import IotScopeError
from .flowmeter import FlowConfig, assemble_flows, compute_features, write_features_csv
from .ids import (
    dns_frequency_report,
    format_alert_log,
    generate_rules,
    load_signature_db,
    match_rules,
    parse_rules,
    render_rules,
)
from .models import MODEL_ALIASES, load_model, make_model, save_model
from .pcap import read_pcap
from .synth import Mode, builtin_profiles, generate_corpus, generate_pcap, read_manifest

MODEL_CHOICES = ("rf", "mlp", "knn")


class _Formatter(argparse.ArgumentDefaultsHelpFormatter, argparse.RawDescriptionHelpFormatter):
    def _get_help_string(self, action):
        if action.default is None or action.required:
            return action.help or ""
        return super()._get_help_string(action)


def _add(sub, name, help_text):
    return sub.add_parser(name, help=help_text, description=help_text, formatter_class=_Formatter)


def _flow_config(args, cfg):
    overrides = {
        "idle_timeout_s": args.idle_timeout,
        "activity_timeout_s": args.activity_timeout,
        "subflow_gap_s": args.subflow_gap,
        "bulk_gap_s": args.bulk_gap,
        "bulk_min_packets": args.bulk_min_packets,
    }
    given = {k: v for k, v in overrides.items() if v is not None}
    return FlowConfig(**{**cfg.flow.__dict__, **given})


# --- commands ------------------------------------------------------------

def _manifest_jobs(path):
    """(pcap path, label) per manifest row; files are relative to the manifest."""
    base = Path(path).parent
    return [(base / row["file"], CategoryLabel.parse(row["label"])) for row in read_manifest(path)]


def cmd_extract(args, cfg):
    flow_cfg = _flow_config(args, cfg)
    if sum(x is not None for x in (args.label, args.device_map, args.manifest)) > 1:
        raise ValueError("--label, --device-map and --manifest are mutually exclusive")
    if args.manifest and args.pcaps:
        raise ValueError("pcap arguments cannot be combined with --manifest")
    if not args.manifest and not args.pcaps:
        raise ValueError("no pcap files given")
    if args.manifest:
        jobs = _manifest_jobs(args.manifest)
    else:
        jobs = [(p, args.label) for p in args.pcaps]
    labelled = args.manifest is not None or args.label is not None
    rows, labels, mapped = [], [], []
    device_map = load_device_map(args.device_map) if args.device_map else None
    for path, label in jobs:
        capture = read_pcap(path)
        flows = assemble_flows(capture, flow_cfg.idle_timeout_s)
        feats = [compute_features(f, flow_cfg.activity_timeout_s, flow_cfg.subflow_gap_s,
                                  flow_cfg.bulk_gap_s, flow_cfg.bulk_min_packets) for f in flows]
        if capture.skipped:
            print(f"{path}: skipped {capture.skipped} non-IPv4 frame(s)", file=sys.stderr)
        if device_map is not None:
            mapped.append(label_by_device_map(flows, feats, device_map, Path(path).name))
        else:
            rows.extend(feats)
            if label is not None:
                labels.extend([label.name] * len(feats))
    if device_map is not None:
        write_dataset_csv(args.out, Dataset.concat(mapped))
        return 0
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        write_features_csv(fh, rows, labels if labelled else None)
    return 0


def cmd_split(args, cfg):
    ds = read_dataset_csv(args.inp)
    fraction = args.fraction if args.fraction is not None else cfg.split_fraction
    seed = args.seed if args.seed is not None else cfg.split_seed
    train, test = stratified_split(ds, fraction, seed)
    write_dataset_csv(args.train, train)
    write_dataset_csv(args.test, test)
    print(f"train: {len(train)} samples, test: {len(test)} samples")
    return 0


_OVERRIDES = {
    "forest": ("n_trees", "max_features", "max_depth", "min_samples_leaf"),
    "mlp": ("hidden_neurons", "learning_rate", "batch_size", "max_epochs"),
    "knn": ("k", "algorithm", "p"),
}


def _model_params(kind, args, cfg):
    kind = MODEL_ALIASES[kind]
    params = dict(cfg.models[kind])
    for name in _OVERRIDES[kind]:
        value = getattr(args, name, None)
        if value is not None:
            params[name] = value
    if kind != "knn":
        params["seed"] = args.seed
    return params


def cmd_train(args, cfg):
    ds = read_dataset_csv(args.train)
    model = make_model(args.model, **_model_params(args.model, args, cfg))
    model.fit(ds.X, ds.y)
    save_model(model, args.out)
    return 0


def cmd_eval(args, cfg):
    model = load_model(args.model)
    ds = read_dataset_csv(args.test)
    report = evaluate(model.predict(ds.X), ds.y)
    print(report.format_table())
    if args.report:
        Path(args.report).write_text(report.to_json())
    return 0


def cmd_grid_search(args, cfg):
    kind = MODEL_ALIASES[args.model]
    ds = read_dataset_csv(args.train)
    if args.grid:
        text = Path(args.grid).read_text() if Path(args.grid).is_file() else args.grid
        grid = json.loads(text)
    else:
        grid = cfg.grids[kind]
    folds = args.folds if args.folds is not None else cfg.folds
    base = _model_params(args.model, args, cfg)
    spec = GridSpec(kind, grid, folds, args.seed, base)
    best, table = grid_search(ds, spec)
    for params, acc in table:
        print(f"{acc:.6f}  {json.dumps(params, sort_keys=True)}")
    print(f"best: {json.dumps(best, sort_keys=True)}")
    if args.out:
        doc = {"model_kind": kind, "folds": folds, "seed": args.seed, "best_params": best,
               "results": [{"params": p, "mean_accuracy": a} for p, a in table]}
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    return 0


def cmd_rules_gen(args, cfg):
    entries = load_signature_db(args.db)
    rules, _ = generate_rules(entries, args.sid_base)
    header = [f"{len(rules)} rules from {len(entries)} signature entries"]
    Path(args.out).write_text(render_rules(rules, header))
    print(f"wrote {len(rules)} rules")
    return 0


def cmd_rules_match(args, cfg):
    rules = parse_rules(args.rules)
    owners = {}
    if args.db:
        _, owners = generate_rules(load_signature_db(args.db), args.sid_base)
    alerts = match_rules(read_pcap(args.pcap), rules, owners)
    log = format_alert_log(alerts)
    if args.alerts:
        Path(args.alerts).write_text(log)
    else:
        sys.stdout.write(log)
    print(f"{len(alerts)} alert(s)", file=sys.stderr)
    return 0


def cmd_dns_report(args, cfg):
    rows = dns_frequency_report(read_pcap(args.pcap))
    width = max([len(r.qname) for r in rows] + [5])
    print(f"{'qname':<{width}}  queries  sources")
    for r in rows:
        print(f"{r.qname:<{width}}  {r.count:7d}  {r.distinct_sources:7d}")
    return 0


def cmd_synth_corpus(args, cfg):
    rows = generate_corpus(args.seed, args.per_category, args.out, args.duration,
                           cfg.flow.idle_timeout_s)
    print(f"wrote {len(rows)} captures and manifest.csv to {args.out}")
    return 0


def cmd_synth_pcap(args, cfg):
    passive, active = builtin_profiles()[args.category]
    profile = passive if args.mode is Mode.Passive else active
    truth = generate_pcap(profile, args.duration, args.seed, args.out, cfg.flow.idle_timeout_s)
    print(f"wrote {args.out}: {truth.session_count} flows, {truth.data_packets} data packets")
    return 0


# --- parser --------------------------------------------------------------

def _category(text):
    try:
        return CategoryLabel.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _mode(text):
    try:
        return Mode(text)
    except ValueError:
        raise argparse.ArgumentTypeError("mode must be Passive or Active") from None


def build_parser():
    parser = argparse.ArgumentParser(
        prog="iotscope", formatter_class=_Formatter,
        description="IoT device category classification and action detection "
                    "from network traffic.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON config file (overrides $IOTSCOPE_CONFIG)")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = _add(sub, "extract", "Extract 63 flow features per flow from pcap files into CSV.")
    p.add_argument("pcaps", nargs="*", metavar="pcap")
    p.add_argument("--label", type=_category, help="category label for every flow "
                   f"({', '.join(c.name for c in CategoryLabel)})")
    p.add_argument("--device-map", help="JSON {ip: category} map for labelling mixed captures")
    p.add_argument("--manifest",
                   help="corpus manifest.csv; extracts and labels every capture listed")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--idle-timeout", type=float, help="flow idle timeout in seconds (config: 120)")
    p.add_argument("--activity-timeout", type=float,
                   help="active/idle split gap in seconds (config: 5)")
    p.add_argument("--subflow-gap", type=float, help="subflow gap in seconds (config: 1)")
    p.add_argument("--bulk-gap", type=float, help="max gap inside a bulk in seconds (config: 1)")
    p.add_argument("--bulk-min-packets", type=int, help="min packets per bulk (config: 4)")
    p.set_defaults(func=cmd_extract)

    p = _add(sub, "split", "Stratified train/test split of a labelled CSV.")
    p.add_argument("--in", dest="inp", required=True, help="labelled flow CSV")
    p.add_argument("--train", required=True, help="output training CSV")
    p.add_argument("--test", required=True, help="output test CSV")
    p.add_argument("--fraction", type=float, help="training fraction (config: 0.7)")
    p.add_argument("--seed", type=int, help="shuffle seed (config: 0)")
    p.set_defaults(func=cmd_split)

    def model_flags(p):
        p.add_argument("--seed", type=int, default=0, help="training seed (rf, mlp)")
        p.add_argument("--n-trees", dest="n_trees", type=int,
                       help="rf: number of trees (config: 200)")
        p.add_argument("--max-features", dest="max_features", type=int,
                       help="rf: features considered per split (config: 63)")
        p.add_argument("--max-depth", dest="max_depth", type=int,
                       help="rf: depth limit (config: unlimited)")
        p.add_argument("--min-samples-leaf", dest="min_samples_leaf", type=int,
                       help="rf: minimum samples per leaf (config: 1)")
        p.add_argument("--hidden-neurons", dest="hidden_neurons", type=int,
                       help="mlp: hidden layer width (config: 100)")
        p.add_argument("--learning-rate", dest="learning_rate", type=float,
                       help="mlp: Adam learning rate (config: 0.001)")
        p.add_argument("--batch-size", dest="batch_size", type=int,
                       help="mlp: mini-batch size (config: 32)")
        p.add_argument("--max-epochs", dest="max_epochs", type=int,
                       help="mlp: epochs (config: 200)")
        p.add_argument("--k", type=int, help="knn: number of neighbours (config: 5)")
        p.add_argument("--algorithm", choices=("auto", "brute", "kd_tree"),
                       help="knn: neighbour search (config: auto)")
        p.add_argument("--p", type=float, help="knn: Minkowski exponent (config: 2)")

    p = _add(sub, "train", "Train a classifier on a labelled CSV and save it as JSON.")
    p.add_argument("--model", choices=MODEL_CHOICES, required=True)
    p.add_argument("--train", required=True, help="training CSV")
    p.add_argument("--out", required=True, help="output model file")
    model_flags(p)
    p.set_defaults(func=cmd_train)

    p = _add(sub, "eval", "Evaluate a saved model on a labelled CSV.")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--test", required=True, help="test CSV")
    p.add_argument("--report", help="write the report as JSON here")
    p.set_defaults(func=cmd_eval)

    p = _add(sub, "grid-search", "Grid search with stratified k-fold cross-validation.")
    p.add_argument("--model", choices=MODEL_CHOICES, required=True)
    p.add_argument("--train", required=True, help="training CSV")
    p.add_argument("--folds", type=int, help="number of folds (config: 5)")
    p.add_argument("--grid", help="JSON grid {param: [values]} or a file holding one "
                   "(config defaults: rf n_trees 100/200/500, mlp hidden_neurons 50/100, "
                   "knn k 3/5/7)")
    p.add_argument("--out", help="write results as JSON here")
    model_flags(p)
    p.set_defaults(func=cmd_grid_search)

    p = _add(sub, "rules", "Generate or match Snort-style rules.")
    rsub = p.add_subparsers(dest="rules_command", metavar="subcommand", required=True)
    g = _add(rsub, "gen", "Render rules from a JSON signature database.")
    g.add_argument("--db", required=True, help="signature database JSON")
    g.add_argument("--out", required=True, help="output rules file")
    g.add_argument("--sid-base", type=int, default=1000000, help="first sid")
    g.set_defaults(func=cmd_rules_gen)
    m = _add(rsub, "match", "Match rules against a pcap and write an alert log.")
    m.add_argument("--rules", required=True, help="rules file")
    m.add_argument("--pcap", required=True, help="capture to scan")
    m.add_argument("--alerts", help="alert log path (default: stdout)")
    m.add_argument("--db", help="signature database used to generate the rules, for entry ids")
    m.add_argument("--sid-base", type=int, default=1000000, help="first sid used with --db")
    m.set_defaults(func=cmd_rules_match)

    p = _add(sub, "dns-report", "Count DNS query names in a pcap.")
    p.add_argument("--pcap", required=True, help="capture to scan")
    p.set_defaults(func=cmd_dns_report)

    p = _add(sub, "synth", "Generate synthetic labelled captures.")
    ssub = p.add_subparsers(dest="synth_command", metavar="subcommand", required=True)
    c = _add(ssub, "corpus", "Captures for all six categories in both modes plus manifest.csv.")
    c.add_argument("--seed", type=int, default=42, help="corpus seed")
    c.add_argument("--per-category", type=int, default=5, help="captures per category and mode")
    c.add_argument("--duration", type=float, default=60.0, help="seconds per capture")
    c.add_argument("--out", required=True, help="output directory")
    c.set_defaults(func=cmd_synth_corpus)
    c = _add(ssub, "pcap", "One capture from a built-in profile.")
    c.add_argument("--category", type=_category, required=True, help="device category")
    c.add_argument("--mode", type=_mode, default="Active", help="Passive or Active")
    c.add_argument("--duration", type=float, default=60.0, help="seconds of traffic")
    c.add_argument("--seed", type=int, default=0, help="generator seed")
    c.add_argument("--out", required=True, help="output pcap")
    c.set_defaults(func=cmd_synth_pcap)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except IotScopeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        name = "IoError" if isinstance(exc, OSError) else type(exc).__name__
        print(f"error: {name}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
