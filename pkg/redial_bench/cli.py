"""cli.py - Orchestrator for the ReDial evaluation harness
corpus -> build -> (mask) -> baseline / external model -> score -> report
Every artifact carries the fingerprint of the config that produced it."""

import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import click
import pandas as pd

from redial_bench import __version__
from redial_bench.artifacts import make_header, read_json, write_json
from redial_bench.baselines import BASELINES, PopularityModel, predict_all
from redial_bench.catalog import compute_coverage, identity_catalog, load_catalog
from redial_bench.config import (BASELINE_KEYS, PREPROCESSING_KEYS, BenchConfig, config_fingerprint, load_config,
                                 load_config_file, parse_k)
from redial_bench.corpus import corpus_items, filter_valid, issue_histogram, parse_corpus
from redial_bench.errors import BenchError, FingerprintMismatchError, InputMissingError, UsageError
from redial_bench.instances import (ARTIFACT_TYPE as INSTANCES, DROP_ARTIFACT_TYPE, VERSION as INSTANCES_VERSION,
                                    build_variants, mask_variant, read_instances, write_drop_log, write_instances)
from redial_bench.logs import get_logger, setup_logging
from redial_bench.metrics import (PREDICTION_ARTIFACT_TYPE, VERSION as METRICS_VERSION, MetricReport,
                                  read_predictions, score, write_predictions)
from redial_bench.stats import corpus_stats, repetition_consistency, repetition_rate

log = get_logger(__name__)
PathType = click.Path(path_type=Path, dir_okay=False)

# === Shared flags (names are part of the public interface) ===
FLAGS: Dict[str, Callable] = {
    "split": click.option("--split", type=click.Choice(["train", "test"]), default=None),
    "variant": click.option("--variant", type=click.Choice(["standard", "dedup"]), default=None),
    "catalog": click.option("--catalog", type=PathType, default=None, help="catalog file; identity catalog if omitted"),
    "k": click.option("--k", "k", default=None, help="comma-separated cutoffs, e.g. 1,10,50"),
    "sr_cutoff": click.option("--sr-cutoff", type=int, default=None),
    "rdl_denominator": click.option("--rdl-denominator", type=click.Choice(["all-turns", "recommender-turns"]), default=None),
    "gt_mode": click.option("--gt-mode", type=click.Choice(["mentioned", "suggested-only"]), default=None),
    "recall_average": click.option("--recall-average", type=click.Choice(["macro", "micro"]), default=None),
    "naive_scope": click.option("--naive-scope", type=click.Choice(["both-speakers", "seeker-only"]), default=None),
    "strict_validation": click.option("--strict-validation", is_flag=True, default=False),
}


def flags(*names: str):
    def decorate(f):
        for name in reversed(names):
            f = FLAGS[name](f)
        return f
    return decorate


def effective_config(ctx: click.Context, **given: Any) -> BenchConfig:
    overrides = dict(given)
    if isinstance(overrides.get("k"), str):
        overrides["k"] = parse_k(overrides["k"])
    if overrides.get("catalog") is not None:
        overrides["catalog"] = str(overrides["catalog"])
    if overrides.get("strict_validation") is False:
        overrides.pop("strict_validation")
    cfg = load_config(ctx.obj.get("config_path"), overrides)
    log.debug(f"Effective config: {cfg.model_dump()}")
    return cfg


def require(path: Optional[Path], what: str) -> Path:
    if path is None:
        raise UsageError(f"{what} is required")
    if not Path(path).exists():
        raise InputMissingError(f"{what} not found: {path}", path=str(path))
    return Path(path)


def variant_header(cfg: BenchConfig, **extra: Any) -> Dict[str, Any]:
    subset = cfg.subset(PREPROCESSING_KEYS)
    return make_header(INSTANCES, INSTANCES_VERSION, subset, config_fingerprint(subset), **extra)


def load_split(path: Path, cfg: BenchConfig):
    parsed = parse_corpus(require(path, "corpus"), cfg.split, cfg.threads)
    dialogues, reports = filter_valid(parsed.dialogues, cfg.strict_validation)
    return parsed, dialogues, reports


@click.group()
@click.version_option(__version__, prog_name="redial-bench")
@click.option("--config", "config_path", type=PathType, default=None, help="YAML file with default flag values")
@click.option("-v", "--verbose", count=True)
@click.option("-q", "--quiet", is_flag=True)
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[Path], verbose: int, quiet: bool):
    """Standardized evaluation of conversational recommenders on ReDial-format corpora."""
    setup_logging(-1 if quiet else verbose)
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


@cli.command()
@click.option("--corpus", type=PathType, required=True)
@click.option("--out-dir", type=click.Path(path_type=Path, file_okay=False), required=True)
@flags("split", "variant", "gt_mode", "strict_validation")
@click.pass_context
def build(ctx, corpus: Path, out_dir: Path, variant: Optional[str], **given):
    """Corpus -> instance files (standard and dedup unless a variant is set by flag or config file)."""
    cfg = effective_config(ctx, variant=variant, **given)
    parsed, dialogues, reports = load_split(corpus, cfg)
    standard, dedup = build_variants(dialogues, cfg.gt_mode, cfg.threads)
    counts = {"dialogues": len(dialogues), "parse_errors": len(parsed.errors),
              "validation_issues": issue_histogram(reports)}
    given_variant = variant or load_config_file(ctx.obj.get("config_path")).get("variant")
    for v in [cfg.variant] if given_variant else ["standard", "dedup"]:
        vcfg = cfg.model_copy(update={"variant": v})
        data = standard if v == "standard" else dedup
        header = variant_header(vcfg, **counts, instances=len(data), dropped=len(data.drop_log),
                                dropped_ground_truth=sum(len(d.dropped_ground_truth) for d in data.drop_log))
        path = out_dir / f"{cfg.split}_{v}.jsonl"
        write_instances(path, data, header)
        log.info(f"Wrote {len(data)} {v} instances to {path}")
        if v == "dedup":
            drops = out_dir / f"{cfg.split}_dedup_drops.jsonl"
            write_drop_log(drops, data, {**header, "artifact_type": DROP_ARTIFACT_TYPE})
            log.info(f"Wrote {len(data.drop_log)} dropped instances to {drops}")


@cli.command()
@click.option("--instances", "instances_path", type=PathType, required=True)
@click.option("--corpus", type=PathType, default=None, help="corpus used for item coverage and the identity catalog")
@click.option("--out", type=PathType, required=True)
@flags("catalog")
@click.pass_context
def mask(ctx, instances_path: Path, corpus: Optional[Path], out: Path, catalog: Optional[Path]):
    """Apply a catalog: uncovered ground truth becomes a unique negative id."""
    cfg = effective_config(ctx, catalog=catalog)
    header, variant = read_instances(require(instances_path, "instance file"))
    if header["config"].get("catalog"):
        raise UsageError(f"{instances_path} is already masked with catalog {header['config']['catalog']}")
    if corpus is not None:
        parsed = parse_corpus(require(corpus, "corpus"), header["config"].get("split", "test"), cfg.threads)
        items = corpus_items(parsed.dialogues)
    else:
        items = {m for inst in variant.instances for m in inst.context_items() | set(inst.ground_truth)}
    cat = load_catalog(require(Path(cfg.catalog), "catalog")) if cfg.catalog else identity_catalog(items)
    source = header["config"].get("variant", variant.name)
    if source != "standard":
        log.warning(f"{instances_path} holds {source} instances; test data coverage describes that variant, "
                    f"not the standard test set")
    coverage = compute_coverage(variant.instances, items, cat)
    coverage_record = {**coverage.to_record(), "variant": source}
    masked = mask_variant(variant, cat)
    subset = {**header["config"], "catalog": cat.catalog_id}
    extra = {k: v for k, v in header.items() if k not in ("artifact_type", "version", "config", "config_fingerprint")}
    new_header = make_header(INSTANCES, INSTANCES_VERSION, subset, config_fingerprint(subset), **extra,
                             coverage=coverage_record)
    write_instances(out, masked, new_header)
    write_json(out.with_name(out.stem + ".coverage.json"),
               {**coverage_record, "config_fingerprint": new_header["config_fingerprint"]})
    log.info(f"Coverage: test data {coverage.test_data_pct:.1%} (strict), items {coverage.items_pct:.1%}")


@cli.command()
@click.option("--corpus", "corpora", multiple=True, required=True, help="SPLIT=FILE, repeatable")
@click.option("--out", type=PathType, required=True)
@flags("gt_mode", "strict_validation")
@click.pass_context
def stats(ctx, corpora: Sequence[str], out: Path, **given):
    """Dataset statistics table and repetition rate."""
    splits: Dict[str, Path] = {}
    for entry in corpora:
        split, sep, path = entry.partition("=")
        if not sep or split not in ("train", "test"):
            raise UsageError(f"--corpus expects train=FILE or test=FILE, got {entry!r}")
        splits[split] = Path(path)
    base = effective_config(ctx, **given)
    config = {**base.subset(("gt_mode", "strict_validation")), "splits": sorted(splits)}
    fingerprint = config_fingerprint(config)
    dialogues, variants = {}, {}
    for split, path in splits.items():
        cfg = base.model_copy(update={"split": split})
        _, kept, _ = load_split(path, cfg)
        dialogues[split] = kept
        variants[split] = build_variants(kept, cfg.gt_mode, cfg.threads)
    table = corpus_stats(dialogues, {s: v[0].instances for s, v in variants.items()})
    repetition = {}
    for split, (standard, dedup) in variants.items():
        bad = repetition_consistency(standard, dedup)
        if bad:
            log.warning(f"{split}: {len(bad)} instances break the repetition/dedup correspondence, e.g. {bad[0]}")
        repetition[split] = repetition_rate(standard.instances)
    table.write_csv(out)
    write_json(out.with_suffix(".json"), table.to_record(config, fingerprint, repetition))
    text = table.render() + f"config fingerprint: {fingerprint}\n"
    out.with_suffix(".txt").write_text(text, encoding="utf-8")
    click.echo(text, nl=False)
    for split, rate in repetition.items():
        click.echo(f"repetition rate ({split}): {rate:.4f}")


@cli.command()
@click.option("--name", type=click.Choice(list(BASELINES)), required=True)
@click.option("--instances", "instances_path", type=PathType, required=True)
@click.option("--train-instances", type=PathType, default=None)
@click.option("--out", type=PathType, required=True)
@flags("naive_scope", "k")
@click.pass_context
def baseline(ctx, name: str, instances_path: Path, train_instances: Optional[Path], out: Path, **given):
    """Run a reference recommender and write a prediction file."""
    cfg = effective_config(ctx, **given)
    header, variant = read_instances(require(instances_path, "instance file"))
    model = None
    if name == "popularity":
        _, train = read_instances(require(train_instances, "--train-instances"))
        model = PopularityModel.fit(train.instances)
    predictions = predict_all(name, variant.instances, cfg, model)
    subset = {"baseline": name, **cfg.subset(BASELINE_KEYS), "k": cfg.k}
    pred_header = make_header(PREDICTION_ARTIFACT_TYPE, METRICS_VERSION, subset, config_fingerprint(subset),
                              instances_fingerprint=header["config_fingerprint"])
    write_predictions(out, predictions, pred_header)
    log.info(f"Wrote {len(predictions)} {name} predictions to {out}")


@cli.command("score")
@click.option("--instances", "instances_path", type=PathType, required=True)
@click.option("--predictions", "predictions_path", type=PathType, required=True)
@click.option("--out", type=PathType, required=True)
@click.option("--name", default=None, help="label for the report (default: prediction file stem)")
@click.option("--force", is_flag=True, help="score even if the fingerprints disagree")
@flags("variant", "k", "sr_cutoff", "rdl_denominator", "recall_average")
@click.pass_context
def score_cmd(ctx, instances_path: Path, predictions_path: Path, out: Path, name: Optional[str], force: bool,
              variant: Optional[str], **given):
    """Instances + predictions -> metric report (JSON and CSV)."""
    header, data = read_instances(require(instances_path, "instance file"))
    preprocessing = {k: v for k, v in header.get("config", {}).items() if k in PREPROCESSING_KEYS}
    if variant and preprocessing.get("variant") not in (None, variant):
        raise FingerprintMismatchError(f"--variant {variant} but {instances_path} holds {preprocessing['variant']} instances",
                                       expected=variant, found=preprocessing.get("variant"))
    cfg = effective_config(ctx, **{**preprocessing, **given})
    pred_header, preds = read_predictions(require(predictions_path, "prediction file"))
    expected = header.get("config_fingerprint", "")
    if pred_header is None:
        log.warning(f"{predictions_path} has no header; cannot check which instances it was produced for")
    elif pred_header.get("instances_fingerprint") != expected:
        found = pred_header.get("instances_fingerprint")
        if not force:
            raise FingerprintMismatchError(f"{predictions_path} was produced for instances {found}, not {expected}",
                                           expected=expected, found=found)
        log.warning(f"Fingerprint mismatch ({found} != {expected}) ignored because of --force")
    report = score(data.instances, preds, cfg, variant=cfg.variant, dropped=int(header.get("dropped", 0)),
                   dropped_ground_truth=int(header.get("dropped_ground_truth", 0)),
                   name=name or predictions_path.stem, instances_fingerprint=expected)
    write_report(out, report)


def write_report(out: Path, report: MetricReport) -> None:
    write_json(out, report.model_dump(mode="json"))
    pd.DataFrame([report.to_csv_row()]).to_csv(out.with_suffix(".csv"), index=False, lineterminator="\n")
    log.info(f"Wrote report to {out}")


def relative_change(frame: pd.DataFrame, baseline: str) -> pd.DataFrame:
    """Adds <metric>_rel = (value - base) / base for every R@k, SR and RDL column."""
    labels = frame["name"].astype(str) + "/" + frame["variant"].astype(str)
    match = frame[(frame["name"] == baseline) | (labels == baseline)]
    if len(match) != 1:
        raise UsageError(f"--baseline-row {baseline!r} matches {len(match)} rows; use NAME/VARIANT to pick one",
                         choices=labels.tolist())
    base = match.iloc[0]
    out = frame.copy()
    for col in [c for c in frame.columns if c.startswith("R@")] + ["SR", "RDL"]:
        ref = base[col]
        out[f"{col}_rel"] = (frame[col] - ref) / ref if ref else float("nan")
    return out


@cli.command()
@click.argument("reports", nargs=-1, type=PathType, required=True)
@click.option("--out", type=PathType, required=True)
@click.option("--baseline-row", default=None, help="report NAME (or NAME/VARIANT) to compare every row against")
def report(reports: Sequence[Path], out: Path, baseline_row: Optional[str]):
    """Merge metric reports into one comparison table."""
    rows = []
    for path in reports:
        rows.append(MetricReport.model_validate(read_json(require(path, "report"))).to_csv_row())
    frame = pd.DataFrame(rows)
    if baseline_row is not None:
        frame = relative_change(frame, baseline_row)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False, lineterminator="\n")
    click.echo(frame.to_string(index=False, float_format=lambda v: f"{v:.3f}"))


def emit_error(err: BenchError) -> int:
    click.echo(json.dumps(err.to_record(), sort_keys=True), err=True)
    return err.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point returning an exit code instead of exiting."""
    try:
        result = cli.main(args=argv, prog_name="redial-bench", standalone_mode=False)
        return result if isinstance(result, int) else 0
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        return emit_error(UsageError(e.format_message()))
    except click.exceptions.Abort:
        return emit_error(BenchError("aborted"))
    except BenchError as e:
        return emit_error(e)
    except Exception as e:
        log.exception("Unexpected failure")
        return emit_error(BenchError(f"{type(e).__name__}: {e}"))


if __name__ == "__main__":
    sys.exit(main())
