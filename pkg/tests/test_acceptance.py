"""Acceptance criteria, one test each. Every test prints a single [PASS]/[FAIL] line."""

import time
from collections import Counter
from contextlib import contextmanager

import numpy as np

from iotscope.dataset import Dataset, label_flows, stratified_split, write_dataset_csv
from iotscope.evaluation import GridSpec, evaluate, grid_search
from iotscope.flowmeter import assemble_flows, compute_features, extract, features_to_csv_text
from iotscope.ids import (
    format_alert_log,
    generate_rules,
    load_example_db,
    match_rules,
    parse_dns_qname,
    parse_rules,
    render_rules,
)
from iotscope.models import (
    ForestClassifier,
    KNNClassifier,
    MLPClassifier,
    dumps_model,
    predict_knn,
)
from iotscope.models.mlp import init_params, loss_and_gradients
from iotscope.pcap import read_pcap
from iotscope.rng import SplitMix64
from iotscope.synth import builtin_profiles, generate_corpus, generate_pcap

from conftest import record_acceptance
from handflows import HAND_FLOWS, as_oracle_input, as_records
from oracles import knn_exhaustive, mlp_loss, rel_close, relative_error, round_half_up
from scripted import dns_payloads, reference_qname, write_script_pcap


@contextmanager
def stopwatch():
    box = {}
    start = time.perf_counter()
    yield box
    box["s"] = time.perf_counter() - start


def report(name, checks, elapsed=None, budget=None, detail=""):
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    parts = [detail] if detail else []
    if budget is not None:
        ok = ok and elapsed < budget
        parts.append(f"{elapsed:.2f}s of {budget:g}s")
    if failed:
        parts.append("failed: " + ", ".join(failed))
    record_acceptance(name, ok, "; ".join(parts))
    assert all(checks.values()), failed
    if budget is not None:
        assert elapsed < budget, f"{elapsed:.2f}s over the {budget}s budget"


def test_feature_oracle():
    from oracles import oracle_features

    with stopwatch() as t:
        mismatches = 0
        for name in sorted(HAND_FLOWS):
            (flow,) = assemble_flows(as_records(name))
            ours = compute_features(flow)
            ref = oracle_features(as_oracle_input(name))
            mismatches += sum(not rel_close(ours[k], ref[k], 1e-9) for k in ref)
    report("feature oracle, 10 hand flows x 63 features at 1e-9",
           {"all features agree": mismatches == 0, "10 flows": len(HAND_FLOWS) == 10},
           t["s"], 1.0, f"{mismatches} mismatches")


def test_knn_oracle_equivalence():
    rng = np.random.default_rng(2024)
    X = rng.normal(size=(500, 63))
    y = rng.integers(0, 6, size=500)
    Q = rng.normal(size=(100, 63))
    with stopwatch() as t:
        model = KNNClassifier(k=5).fit(X, y)
        mean, std = X.mean(axis=0), X.std(axis=0)
        Z, QZ = (X - mean) / std, (Q - mean) / std
        agree = 0
        for q, qz in zip(Q, QZ):
            label, ind = predict_knn(model, q)
            ref_label, ref_ind = knn_exhaustive(Z, y, qz, 5)
            agree += (label, list(ind)) == (ref_label, ref_ind)
    report("knn equals exhaustive search, 100 queries on 500 samples",
           {"100% agreement": agree == 100}, t["s"], 5.0, f"{agree}/100 agree")


def test_mlp_gradient_check():
    rng = np.random.default_rng(11)
    step = 1e-5
    worst = 0.0
    with stopwatch() as t:
        for batch in range(20):
            params = init_params(63, 100, 6, SplitMix64(batch))
            X = rng.normal(size=(5, 63))
            y = rng.integers(0, 6, size=5)
            _, grads = loss_and_gradients(params, X, np.eye(6)[y])
            # every output weight and every bias, plus 40 sampled input weights
            coords = [(n, i) for n in ("W2", "b2", "b1") for i in range(params[n].size)]
            coords += [("W1", int(i)) for i in rng.choice(params["W1"].size, 40, replace=False)]
            for name, i in coords:
                arr = params[name]
                keep = arr.flat[i]
                arr.flat[i] = keep + step
                up = mlp_loss(params, X, y)
                arr.flat[i] = keep - step
                down = mlp_loss(params, X, y)
                arr.flat[i] = keep
                worst = max(worst, relative_error(grads[name].flat[i], (up - down) / (2 * step)))
    report("mlp analytic vs central-difference gradients, 20 batches of 5",
           {"max relative error < 1e-4": worst < 1e-4}, t["s"], 10.0,
           f"max relative error {worst:.2e}")


def consistent_datasets():
    rng = np.random.default_rng(5)
    X1 = rng.normal(size=(200, 63))
    y1 = rng.integers(0, 6, size=200)
    # coarse integer grid: many duplicate rows, each duplicate group shares one label
    X2 = rng.integers(0, 3, size=(200, 4)).astype(float)
    keys = [tuple(r) for r in X2]
    first = {}
    y2 = np.array([first.setdefault(k, int(rng.integers(0, 6))) for k in keys])
    X3 = rng.normal(size=(60, 2))
    y3 = (X3[:, 0] * X3[:, 1] > 0).astype(int) + 2 * (X3[:, 0] > 1)
    return [(X1, y1), (X2, y2), (X3, y3)]


def test_forest_consistency():
    with stopwatch() as t:
        accs = []
        for X, y in consistent_datasets():
            model = ForestClassifier(n_trees=200, max_features=min(63, X.shape[1]), seed=0)
            accs.append(float(np.mean(model.fit(X, y).predict(X) == y)))
        X, y = consistent_datasets()[2]
        a = dumps_model(ForestClassifier(n_trees=200, seed=9).fit(X, y))
        b = dumps_model(ForestClassifier(n_trees=200, seed=9).fit(X, y))
    report("forest training accuracy 1.0 on consistent data, byte-identical retrain",
           {"accuracy 1.0": accs == [1.0] * 3, "identical file": a == b}, t["s"], 10.0,
           f"accuracies {accs}")


def test_split_and_metric_properties():
    rng = np.random.default_rng(8)
    counts_ok = True
    for seed in range(20):
        counts = rng.integers(2, 60, size=6)
        y = np.repeat(np.arange(6), counts)
        train, _ = stratified_split(Dataset(np.zeros((len(y), 63)), y), 0.7, seed)
        got = np.bincount(train.y, minlength=6)
        counts_ok &= all(int(g) == round_half_up(0.7, int(n)) for g, n in zip(got, counts))

    r = evaluate([0, 1, 1], [0, 0, 1])
    hand = (r.confusion[0][:2] == [1, 1] and r.confusion[1][:2] == [0, 1]
            and r.precision[:2] == [1.0, 0.5] and r.recall[:2] == [0.5, 1.0]
            and abs(r.f1[0] - 2 / 3) < 1e-15 and abs(r.f1[1] - 2 / 3) < 1e-15
            and r.accuracy == 2 / 3)

    trace_ok = True
    for _ in range(200):
        n = int(rng.integers(1, 300))
        preds, truths = rng.integers(0, 6, size=n), rng.integers(0, 6, size=n)
        rep = evaluate(preds, truths)
        trace_ok &= rep.accuracy == np.trace(np.array(rep.confusion)) / n
    report("split counts, 3-sample confusion example, accuracy = trace/n",
           {"split counts": counts_ok, "hand example": hand, "trace/n": trace_ok})


def test_ids_round_trip_and_matching(tmp_path):
    with stopwatch() as t:
        rules, owners = generate_rules(load_example_db())
        path = tmp_path / "local.rules"
        path.write_text(render_rules(rules))
        lossless = parse_rules(path) == rules

        pcap = tmp_path / "script.pcap"
        n, expected = write_script_pcap(pcap)
        alerts = match_rules(read_pcap(pcap), rules, owners)
        got = Counter((a.timestamp_us, a.sid) for a in alerts)
        want = Counter(expected)
        fp, fn = sum((got - want).values()), sum((want - got).values())

        payloads = dns_payloads()
        qname_ok = sum(parse_dns_qname(p) == reference_qname(p) for _, p in payloads)
    report("ids rule round-trip, 50-packet scripted capture, 20 DNS payloads",
           {"lossless": lossless, "50 packets": n == 50, "no false positives": fp == 0,
            "no false negatives": fn == 0, "qname 20/20": qname_ok == len(payloads) == 20},
           t["s"], 2.0, f"{sum(got.values())} alerts, fp={fp}, fn={fn}, qname {qname_ok}/20")


def build_corpus_dataset(out, seed, per_category):
    rows = generate_corpus(seed, per_category, out)
    return Dataset.concat(label_flows(extract(out / r["file"]), r["label"], r["file"])
                          for r in rows)


def test_end_to_end_benchmark(tmp_path):
    with stopwatch() as t:
        ds = build_corpus_dataset(tmp_path, 42, 5)
        train, test = stratified_split(ds, 0.7, 0)
        rf = ForestClassifier(n_trees=200, max_features=63, seed=0).fit(train.X, train.y)
        knn = KNNClassifier(k=5).fit(train.X, train.y)
        rf_acc = evaluate(rf.predict(test.X), test.y).accuracy
        knn_acc = evaluate(knn.predict(test.X), test.y).accuracy
    report("end-to-end synthetic benchmark, seed 42, 5 captures per category and mode",
           {"rf >= 0.95": rf_acc >= 0.95, "knn >= 0.90": knn_acc >= 0.90,
            "rf >= knn": rf_acc >= knn_acc},
           t["s"], 60.0, f"rf {rf_acc:.4f}, knn {knn_acc:.4f}, {len(ds)} flows")


def pipeline_artifacts(root):
    """Run every stage once under fixed seeds; return {artifact name: bytes}."""
    root.mkdir()
    out = {}
    profile = builtin_profiles()[next(iter(builtin_profiles()))][1]
    generate_pcap(profile, 15.0, 4, root / "one.pcap")
    out["synth pcap"] = (root / "one.pcap").read_bytes()
    out["features csv"] = features_to_csv_text(extract(root / "one.pcap")).encode()

    ds = build_corpus_dataset(root / "corpus", 6, 1)
    out["corpus manifest"] = (root / "corpus" / "manifest.csv").read_bytes()
    train, test = stratified_split(ds, 0.7, 3)
    for name, part in (("train csv", train), ("test csv", test)):
        write_dataset_csv(root / "part.csv", part)
        out[name] = (root / "part.csv").read_bytes()
    for name, model in (("forest", ForestClassifier(n_trees=30, seed=2)),
                        ("mlp", MLPClassifier(hidden_neurons=20, max_epochs=20, seed=2)),
                        ("knn", KNNClassifier(k=3))):
        model.fit(train.X, train.y)
        out[f"{name} model"] = dumps_model(model).encode()
        out[f"{name} report"] = evaluate(model.predict(test.X), test.y).to_json().encode()
    out["grid search"] = repr(grid_search(train, GridSpec("knn", {"k": [1, 3]}, folds=2,
                                                          seed=1))).encode()
    rules, owners = generate_rules(load_example_db())
    out["rules"] = render_rules(rules).encode()
    write_script_pcap(root / "script.pcap")
    out["alert log"] = format_alert_log(
        match_rules(read_pcap(root / "script.pcap"), rules, owners)).encode()
    return out


def test_determinism_sweep(tmp_path):
    a = pipeline_artifacts(tmp_path / "a")
    b = pipeline_artifacts(tmp_path / "b")
    differing = [k for k in a if a[k] != b[k]]
    report("determinism sweep over every stage",
           {name: name not in differing for name in a}, detail=f"{len(a)} artifacts compared")
