"""``usability-audit`` command line.

Exit codes: 0 ok, 2 network, 3 I/O, 4 data, 5 model, 64 usage.
"""

import argparse
import datetime as dt
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .dataset import FEATURES, AuditRecord, encode, encode_all, fit_scaler, read_csv, split, write_csv
from .errors import AuditError, DataError, SingleClassInput, StorageError, TooFewRows, UsageError
from .evaluation import evaluate
from .extraction import HtmlDocument, detect_mobile_ui, extract_contacts
from .grades import ResolutionGrade, UsabilityGrade
from .labeling import (
    DEFAULT_IMPORTANCE, assign_all, kmeans_fit, map_clusters_to_grades, materialize_screenshot_dataset,
    read_scores,
)
from .probe import (
    LoadBackend, LoadTimeSample, LocalResolutionScorer, PageSpeedClient, WebDriverTimingAdapter,
    check_url, fetch_document, grade_resolution, probe_many, seconds_from_timing,
)
from .recommend import build_audit_report, recommend
from .schemas import validate
from .svm import DEFAULT_C, DEFAULT_GAMMA, GridSpec, grid_search, load_model, save_model, train_multiclass

log = logging.getLogger("usability_audit")

GRADE_CLASSES = UsabilityGrade.ordered()


class ArgumentParser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage, which would collide with the network code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _ratio(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"expected a value strictly between 0 and 1, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return v


def _emit(doc, schema, report_path=None):
    """Validate ``doc``, print it, and optionally also write it to ``report_path``."""
    validate(doc, schema, error=AssertionError)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if report_path:
        _write_text(report_path, text)


def _write_text(path, text):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def _figures_dir(args):
    return Path(args.figures) if getattr(args, "figures", None) else None


# --- extraction and probing ------------------------------------------------------

def _resolution_scorer(cfg):
    if cfg.resolution_source == "local":
        return LocalResolutionScorer(timeout=cfg.timeout)
    return PageSpeedClient(endpoint=cfg.pagespeed_endpoint, api_key=cfg.pagespeed_api_key,
                           timeout=cfg.pagespeed_timeout, optimization_audit=cfg.optimization_audit,
                           format_audit=cfg.format_audit)


def probe_url(url, cfg, resolution=True, resolution_grade=None, load_time=None):
    """Fetch ``url`` once and derive every feature; returns a probe_result dict."""
    check_url(url)
    body, seconds = fetch_document(url, timeout=cfg.timeout)
    backend = LoadBackend(cfg.load_backend)
    if backend is LoadBackend.BROWSER_TIMING:
        seconds = seconds_from_timing(WebDriverTimingAdapter().navigation_timing(url, cfg.timeout))
    if load_time is not None:
        seconds = load_time
    sample = LoadTimeSample(url, seconds, backend)
    html = body.decode("utf-8", errors="replace")
    doc = HtmlDocument(html, url)
    contacts = extract_contacts(doc)
    result = {
        "url": url,
        "load_time": {"seconds": sample.seconds, "backend": sample.backend.value},
        "mobile_ui": detect_mobile_ui(doc, cfg.mobile_phrases),
        "contacts": contacts.to_dict(),
    }
    if resolution_grade is not None:
        result["resolution"] = None
        result["_grade"] = ResolutionGrade(resolution_grade)
    elif resolution:
        scorer = _resolution_scorer(cfg)
        if isinstance(scorer, LocalResolutionScorer):
            scores = scorer.scores_from_html(html, url)
        else:
            scores = scorer.scores(url)
        grade = grade_resolution(scores)
        result["resolution"] = {
            "optimization": scores.optimization,
            "format": scores.format,
            "average": scores.average,
            "grade": grade.value,
            "source": cfg.resolution_source,
        }
        result["_grade"] = grade
    return result


def _record_from_probe(result):
    return AuditRecord(
        url=result["url"],
        load_time_s=result["load_time"]["seconds"],
        mobile_ui=result["mobile_ui"],
        resolution_grade=result["_grade"],
        contact_info=result["contacts"]["any_present"],
    )


def _read_html(path, source_url):
    try:
        return HtmlDocument.from_file(path, source_url)
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc


def _offline_record(args, cfg):
    """Features from a saved HTML file; load time and resolution must come from flags."""
    doc = _read_html(args.html, args.source_url)
    missing = [flag for flag, v in (("--load-time", args.load_time),
                                    ("--resolution-grade", args.resolution_grade)) if v is None]
    if missing:
        raise DataError(f"row incomplete without network access: supply {' and '.join(missing)}")
    url = args.source_url or Path(args.html).resolve().as_uri()
    return AuditRecord(url, args.load_time, detect_mobile_ui(doc, cfg.mobile_phrases),
                       ResolutionGrade(args.resolution_grade), extract_contacts(doc).any_present)


def _html_record(args, cfg):
    if args.no_net or not args.source_url:
        if not args.no_net and (args.load_time is None or args.resolution_grade is None):
            raise UsageError("--html needs --source-url to measure the page, or --load-time and "
                             "--resolution-grade")
        return _offline_record(args, cfg)
    # parse the saved copy, measure the live page
    doc = _read_html(args.html, args.source_url)
    live = probe_url(args.source_url, cfg, resolution_grade=args.resolution_grade,
                     load_time=args.load_time)
    return AuditRecord(args.source_url, live["load_time"]["seconds"],
                       detect_mobile_ui(doc, cfg.mobile_phrases), live["_grade"],
                       extract_contacts(doc).any_present)


def _read_url_list(path):
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise StorageError(f"cannot read URL list {path}: {exc}") from exc
    urls = [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not urls:
        raise DataError(f"{path} lists no URLs")
    return urls


def cmd_extract(args, cfg):
    if args.html:
        records = [_html_record(args, cfg)]
    else:
        if args.no_net:
            raise UsageError("--no-net only applies to --html input")
        urls = [args.url] if args.url else _read_url_list(args.urls)
        for u in urls:
            check_url(u)

        def one(u):
            return _record_from_probe(probe_url(u, cfg, resolution_grade=args.resolution_grade,
                                                load_time=args.load_time))

        results = probe_many(one, urls, cfg.parallelism)
        records = [r for r in results if isinstance(r, AuditRecord)]
        failures = [(u, r) for u, r in zip(urls, results) if not isinstance(r, AuditRecord)]
        if records:
            write_csv(records, args.out, append=True)
        for u, exc in failures:
            print(f"error: {u}: {exc}", file=sys.stderr)
        if failures:
            exc = failures[0][1]
            if isinstance(exc, AuditError):
                raise exc
            raise DataError(f"{failures[0][0]}: {exc}") from exc
        print(f"wrote {len(records)} row(s) to {args.out}", file=sys.stderr)
        return 0
    write_csv(records, args.out, append=True)
    print(f"wrote {len(records)} row(s) to {args.out}", file=sys.stderr)
    return 0


def cmd_probe(args, cfg):
    result = probe_url(args.url, cfg, resolution=not args.no_resolution)
    result.pop("_grade", None)
    _emit(result, "probe_result")
    return 0


# --- textual pipeline ------------------------------------------------------------

def cmd_label(args, cfg):
    records = read_csv(args.input)
    if len(records) < 5:
        raise TooFewRows(f"labeling needs at least 5 rows, got {len(records)}")
    X = encode_all(records, ordinal=cfg.ordinal_encoding)
    scaler = fit_scaler(X)
    Xs = scaler.apply(X)
    model = kmeans_fit(Xs, k=5, seed=cfg.seed)
    gmap = map_clusters_to_grades(model, tuple(args.weights) if args.weights else DEFAULT_IMPORTANCE)
    clusters = assign_all(model, Xs)
    labeled = [r.with_grade(gmap.grade_of(int(c))) for r, c in zip(records, clusters)]
    write_csv(labeled, args.output)
    sizes = {g.value: 0 for g in GRADE_CLASSES}
    for r in labeled:
        sizes[r.grade.value] += 1
    summary = {
        "rows": len(labeled),
        "seed": cfg.seed,
        "inertia": model.inertia,
        "iterations": model.iterations_run,
        "grade_counts": sizes,
    }
    figs = _figures_dir(args)
    if figs:
        from .figures import cluster_profile_figure

        order = sorted(range(model.k), key=lambda c: gmap.grade_of(c).rank)
        cluster_profile_figure(model.centroids[order], [gmap.grade_of(c).value for c in order],
                               FEATURES, figs / "cluster_profile.png")
    _emit(summary, "label_summary")
    return 0


def _graded(records):
    for i, r in enumerate(records, start=1):
        if r.grade is None:
            raise DataError(f"row {i} has no grade; run 'label' first")
    return [r.grade for r in records]


def cmd_train_svm(args, cfg):
    records = read_csv(args.input)
    labels = _graded(records)
    if len(records) < 2:
        raise TooFewRows(f"need at least 2 labeled rows, got {len(records)}")
    X = encode_all(records, ordinal=cfg.ordinal_encoding)
    sp = split(len(records), ratio=args.ratio, seed=cfg.seed)
    tr, te = sp.train_indices, sp.test_indices
    y_tr = [labels[i] for i in tr]
    if len(set(y_tr)) < 2:
        raise SingleClassInput("the training split holds a single grade; nothing to separate")
    scaler = fit_scaler(X[tr])
    X_tr = scaler.apply(X[tr])
    grid_doc = None
    if args.grid:
        result = grid_search(X_tr, y_tr, GridSpec(folds=args.folds), seed=cfg.seed)
        C, gamma = result.C, result.gamma
        grid_doc = result.to_dict()
    else:
        C = args.C if args.C is not None else DEFAULT_C
        gamma = args.gamma if args.gamma is not None else DEFAULT_GAMMA
    model = train_multiclass(X_tr, y_tr, C=C, gamma=gamma)
    model.scaler = scaler
    model.ordinal_encoding = cfg.ordinal_encoding
    predicted = model.predict(scaler.apply(X[te]))
    metrics = evaluate([labels[i] for i in te], predicted, GRADE_CLASSES).to_dict()
    save_model(model, args.model)
    doc = {
        "C": C,
        "gamma": gamma,
        "seed": cfg.seed,
        "n_train": len(tr),
        "n_test": len(te),
        "converged": model.converged,
        "grid": grid_doc,
        "metrics": metrics,
    }
    figs = _figures_dir(args)
    if figs:
        from .figures import confusion_figure, cv_table_figure

        confusion_figure(metrics, figs / "confusion.png", title="SVM test confusion")
        if grid_doc:
            cv_table_figure(grid_doc, figs / "cv_table.png")
    _emit(doc, "svm_train_report", args.report)
    return 0


def _svm_model_path(args, cfg):
    path = getattr(args, "svm_model", None) or cfg.svm_model
    if not path:
        raise UsageError("no SVM model given (--svm-model or svm_model in the config file)")
    return path


def _scaled(model, records):
    X = encode_all(records, ordinal=model.ordinal_encoding)
    return model.scaler.apply(X) if model.scaler is not None else X


def cmd_predict_svm(args, cfg):
    model = load_model(_svm_model_path(args, cfg))
    records = read_csv(args.input)
    if not records:
        raise DataError(f"{args.input} holds no rows")
    predicted = model.predict(_scaled(model, records))
    write_csv([r.with_grade(g) for r, g in zip(records, predicted)], args.output)
    counts = {g.value: 0 for g in GRADE_CLASSES}
    for g in predicted:
        counts[g.value] += 1
    _emit({"rows": len(records), "grade_counts": counts}, "predict_summary")
    return 0


# --- screenshots -------------------------------------------------------------------

def cmd_ingest(args, cfg):
    scores = read_scores(args.scores)
    summary = materialize_screenshot_dataset(scores, args.images, args.output,
                                             ratio=args.ratio, seed=cfg.seed)
    _emit(summary, "ingest_summary")
    return 0


def _cnn_model_path(args, cfg):
    path = getattr(args, "cnn_model", None) or cfg.cnn_model
    if not path:
        raise UsageError("no CNN model given (--cnn-model or cnn_model in the config file)")
    return path


def cmd_train_cnn(args, cfg):
    from .cnn import AdamConfig, TrainConfig, evaluate_split, train
    from .errors import EmptyDataset

    data = Path(args.data)
    for part in ("train", "test"):
        if not (data / part).is_dir():
            raise EmptyDataset(f"missing {part} folder under {data}")
    config = TrainConfig(batch_size=args.batch, epochs=args.epochs, seed=cfg.seed,
                         input_side=args.side, adam=AdamConfig(lr=args.lr))
    result = train(data, config)
    result.model.save(args.model)
    actual, predicted, skipped_test = evaluate_split(result.model, data / "test")
    metrics = evaluate(actual, predicted, GRADE_CLASSES).to_dict()
    doc = {
        "config": config.to_dict(),
        "epochs": result.log,
        "skipped_images": result.skipped + skipped_test,
        "test_metrics": metrics,
    }
    figs = _figures_dir(args)
    if figs:
        from .figures import confusion_figure, training_curves_figure

        training_curves_figure(result.log, figs / "training_curves.png")
        confusion_figure(metrics, figs / "confusion.png", title="CNN test confusion")
    _emit(doc, "cnn_train_report", args.report)
    return 0


def cmd_eval(args, cfg):
    if bool(args.svm_model) == bool(args.cnn_model):
        raise UsageError("eval needs exactly one of --svm-model or --cnn-model")
    if args.svm_model:
        if not args.input:
            raise UsageError("--svm-model evaluation needs --in <labeled csv>")
        model = load_model(args.svm_model)
        records = read_csv(args.input)
        actual = _graded(records)
        predicted = model.predict(_scaled(model, records))
    else:
        from .cnn import CnnModel, evaluate_split

        if not args.data:
            raise UsageError("--cnn-model evaluation needs --data <split folder>")
        model = CnnModel.load(args.cnn_model)
        actual, predicted, _ = evaluate_split(model, args.data)
    metrics = evaluate(actual, predicted, GRADE_CLASSES).to_dict()
    figs = _figures_dir(args)
    if figs:
        from .figures import confusion_figure

        confusion_figure(metrics, figs / "confusion.png")
    _emit(metrics, "metrics_report", args.report)
    return 0


# --- audit ------------------------------------------------------------------------

def _model_version(path):
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()[:12]
    return f"svm-v1:{digest}"


def cmd_audit(args, cfg):
    path = _svm_model_path(args, cfg)
    model = load_model(path)
    version = _model_version(path)
    details = {}
    if args.html:
        record = _html_record(args, cfg)
    else:
        result = probe_url(args.url, cfg, resolution_grade=args.resolution_grade,
                           load_time=args.load_time)
        record = _record_from_probe(result)
        details["contacts"] = result["contacts"]
        if result.get("resolution"):
            details["resolution"] = result["resolution"]
    x = encode(record, ordinal=model.ordinal_encoding)
    if model.scaler is not None:
        x = model.scaler.apply(x)
    grade = model.predict_one(x)
    report = build_audit_report(
        record, grade, recommend(record, cfg), version,
        dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"), details or None)
    _emit(report, "audit_report")
    return 0


# --- parser -------------------------------------------------------------------------

def _add_probe_flags(p):
    p.add_argument("--timeout", type=float, help="per-request timeout in seconds")
    p.add_argument("--backend", choices=[b.value for b in LoadBackend], dest="load_backend",
                   help="load-time measurement backend")
    p.add_argument("--resolution-source", choices=["pagespeed", "local"],
                   help="page-speed service or the offline image scorer")
    p.add_argument("--pagespeed-endpoint", help="override the page-speed service URL")


def _add_feature_flags(p):
    p.add_argument("--html", help="saved HTML page instead of a live URL")
    p.add_argument("--source-url", help="live URL the saved HTML came from")
    p.add_argument("--no-net", action="store_true", help="never touch the network")
    p.add_argument("--load-time", type=_nonneg_float, help="load time in seconds (skips measuring)")
    p.add_argument("--resolution-grade", choices=[g.value for g in ResolutionGrade],
                   help="resolution grade (skips scoring)")


def build_parser():
    parser = ArgumentParser(prog="usability-audit",
                            description="Audit e-commerce sites for usability and predict a grade.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="key = value settings file (default $AUDIT_CONFIG)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    p = sub.add_parser("extract", help="extract one feature row per site into a CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--url")
    src.add_argument("--html")
    src.add_argument("--urls", help="file with one URL per line")
    p.add_argument("--source-url")
    p.add_argument("--no-net", action="store_true")
    p.add_argument("--load-time", type=_nonneg_float)
    p.add_argument("--resolution-grade", choices=[g.value for g in ResolutionGrade])
    p.add_argument("--out", required=True, help="CSV to append to")
    p.add_argument("--parallelism", type=_positive_int)
    _add_probe_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("probe", help="measure one URL and print the raw probe as JSON")
    p.add_argument("--url", required=True)
    p.add_argument("--no-resolution", action="store_true", help="skip image scoring")
    _add_probe_flags(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("label", help="cluster rows into five grades")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--weights", type=float, nargs=4, metavar=("LOAD", "RES", "MOBILE", "CONTACT"),
                   help="feature importance used to name clusters")
    p.add_argument("--figures", help="directory for PNG figures")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train-svm", help="train the grade classifier on a labeled CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True, help="model JSON to write")
    p.add_argument("--grid", action="store_true", help="pick C and gamma by cross-validation")
    p.add_argument("--folds", type=_positive_int, default=3)
    p.add_argument("--C", type=float, dest="C")
    p.add_argument("--gamma", type=float)
    p.add_argument("--ratio", type=_ratio, default=0.7, help="training share of the split")
    p.add_argument("--seed", type=int)
    p.add_argument("--report", help="also write the JSON report here")
    p.add_argument("--figures", help="directory for PNG figures")
    p.set_defaults(func=cmd_train_svm)

    p = sub.add_parser("predict-svm", help="grade every row of a CSV")
    p.add_argument("--svm-model", "--model", dest="svm_model")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=cmd_predict_svm)

    p = sub.add_parser("ingest-screenshots", help="grade scored screenshots into train/test folders")
    p.add_argument("--images", required=True)
    p.add_argument("--scores", required=True, help="CSV with filename,score columns")
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--ratio", type=_ratio, default=0.7)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train-cnn", help="train the screenshot classifier")
    p.add_argument("--data", required=True, help="folder holding train/ and test/")
    p.add_argument("--model", required=True, help="model file (.npz) to write")
    p.add_argument("--epochs", type=_positive_int, default=10)
    p.add_argument("--batch", type=_positive_int, default=32)
    p.add_argument("--side", type=_positive_int, default=224)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int)
    p.add_argument("--report", help="also write the JSON report here")
    p.add_argument("--figures", help="directory for PNG figures")
    p.set_defaults(func=cmd_train_cnn)

    p = sub.add_parser("eval", help="metrics for a saved model on labeled data")
    p.add_argument("--svm-model")
    p.add_argument("--cnn-model")
    p.add_argument("--in", dest="input", help="labeled CSV (SVM)")
    p.add_argument("--data", help="folder of <grade>/ image folders (CNN)")
    p.add_argument("--report", help="also write the JSON report here")
    p.add_argument("--figures", help="directory for PNG figures")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("audit", help="grade one site and print recommendations as JSON")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--url")
    src.add_argument("--html")
    p.add_argument("--source-url")
    p.add_argument("--no-net", action="store_true")
    p.add_argument("--load-time", type=_nonneg_float)
    p.add_argument("--resolution-grade", choices=[g.value for g in ResolutionGrade])
    p.add_argument("--svm-model", "--model", dest="svm_model")
    _add_probe_flags(p)
    p.set_defaults(func=cmd_audit)
    return parser


_OVERRIDES = ("timeout", "parallelism", "load_backend", "resolution_source", "pagespeed_endpoint",
              "seed")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {k: getattr(args, k, None) for k in _OVERRIDES}
        cfg = load_config(args.config, overrides=overrides)
        return args.func(args, cfg)
    except AuditError as exc:
        print(f"error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
