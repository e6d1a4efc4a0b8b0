"""Command-line pipeline: score, sample, analyze.

Scoring is split from selection and reporting because it dominates runtime
and its artifacts are reusable across selection configs.  Every output is
accompanied by content hashes of its inputs; ``sample`` and ``analyze``
refuse scores whose recorded corpus hash no longer matches the input file.

All pipeline outputs are deterministic: ``--threads`` only sets the degree
of row-level worker pools and never changes any byte of any artifact.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analyze as analyze_mod
from . import corpus as corpus_mod
from . import featurize as feat_mod
from . import mahalanobis as maha_mod
from . import sampler as sampler_mod
from .errors import (
    AbnormalityError,
    CapacityError,
    FitError,
    ParseError,
    SchemaError,
    SingularityError,
    StaleScoresError,
    StatError,
)
from .hashing import sha256_file

__all__ = ["RunConfig", "cmd_score", "cmd_sample", "cmd_analyze", "main"]

META_SUFFIX = ".meta.json"

# Fields that shape pipeline outputs; out_dir and threads are runtime knobs
# and are excluded from persisted config echoes so artifacts stay
# byte-identical across directories and worker counts.
_PIPELINE_FIELDS = (
    "format",
    "context_field",
    "title_field",
    "id_field",
    "ngram",
    "lowercase",
    "strip_edge_punctuation",
    "l_cap",
    "epsilon_base_scale",
    "epsilon_max_exponent",
    "epsilon_fixed",
    "k_low",
    "k_high",
    "k_mean",
    "strategy",
    "bucket_width",
    "disjoint",
    "subset_format",
    "orders",
    "bins",
    "seed",
)


@dataclass
class RunConfig:
    """Pipeline configuration; JSON-serializable, CLI flags override file values."""

    input: str | None = None
    format: str = "squad"
    context_field: str = "context"
    title_field: str = "title"
    id_field: str = "id"
    ngram: int = 1
    lowercase: bool = True
    strip_edge_punctuation: bool = True
    l_cap: int | None = None
    epsilon_base_scale: float = 1e-8
    epsilon_max_exponent: int = 8
    epsilon_fixed: float | None = None
    k_low: int = 3500
    k_high: int = 3500
    k_mean: int = 3500
    strategy: str = "global"
    bucket_width: int = 250
    disjoint: bool = True
    subset_format: str = "jsonl"
    orders: tuple[int, ...] = (1,)
    bins: int = 100
    out_dir: str = "out"
    threads: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.format not in ("squad", "jsonl"):
            raise ValueError(f"format must be 'squad' or 'jsonl', got {self.format!r}")
        if self.ngram < 1:
            raise ValueError(f"ngram order must be >= 1, got {self.ngram}")
        if self.l_cap is not None and self.l_cap < 1:
            raise ValueError(f"l_cap must be >= 1, got {self.l_cap}")
        if self.epsilon_base_scale <= 0:
            raise ValueError("epsilon_base_scale must be > 0")
        if self.epsilon_max_exponent < 0:
            raise ValueError("epsilon_max_exponent must be >= 0")
        if min(self.k_low, self.k_high, self.k_mean) < 0:
            raise ValueError("selection counts must be >= 0")
        if self.strategy not in ("global", "bucketed"):
            raise ValueError(f"strategy must be 'global' or 'bucketed', got {self.strategy!r}")
        if self.bucket_width < 1:
            raise ValueError(f"bucket_width must be >= 1, got {self.bucket_width}")
        if self.subset_format not in ("jsonl", "squad"):
            raise ValueError(f"subset_format must be 'jsonl' or 'squad', got {self.subset_format!r}")
        if not self.orders or any(o < 1 for o in self.orders):
            raise ValueError(f"orders must be a nonempty list of integers >= 1, got {self.orders}")
        if self.bins < 1:
            raise ValueError(f"bins must be >= 1, got {self.bins}")
        if self.threads < 0:
            raise ValueError(f"threads must be >= 0, got {self.threads}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["orders"] = list(self.orders)
        return d

    def pipeline_dict(self) -> dict:
        d = self.to_dict()
        return {k: d[k] for k in _PIPELINE_FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.orders = tuple(int(o) for o in cfg.orders)
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def tokenizer_config(self) -> feat_mod.TokenizerConfig:
        return feat_mod.TokenizerConfig(
            lowercase=self.lowercase, strip_edge_punctuation=self.strip_edge_punctuation
        )

    def epsilon_policy(self) -> maha_mod.EpsilonPolicy:
        return maha_mod.EpsilonPolicy(
            base_scale=self.epsilon_base_scale,
            max_exponent=self.epsilon_max_exponent,
            fixed=self.epsilon_fixed,
        )

    def selection_spec(self) -> sampler_mod.SelectionSpec:
        return sampler_mod.SelectionSpec(
            k_low=self.k_low,
            k_high=self.k_high,
            k_mean=self.k_mean,
            strategy=self.strategy,
            bucket_width=self.bucket_width,
            disjoint=self.disjoint,
        )

    def jsonl_fields(self) -> corpus_mod.JsonlFields:
        return corpus_mod.JsonlFields(
            context=self.context_field, title=self.title_field, id=self.id_field
        )

    def resolved_threads(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


class _Artifacts:
    """Tracks files being written so a failed command leaves nothing behind."""

    def __init__(self) -> None:
        self.paths: list[Path] = []

    def add(self, path: Path) -> Path:
        self.paths.append(path)
        return path

    def cleanup(self) -> None:
        for p in self.paths:
            try:
                p.unlink()
            except OSError:
                pass


def _ingest(cfg: RunConfig) -> corpus_mod.Corpus:
    if not cfg.input:
        raise ValueError("no input file configured (use --input or a config file)")
    path = Path(cfg.input)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    return corpus_mod.ingest_file(path, cfg.format, cfg.jsonl_fields())


def run_score_pipeline(
    corpus: corpus_mod.Corpus, cfg: RunConfig, ngram: int | None = None
) -> tuple[maha_mod.ScoreVector, maha_mod.MomentModel, feat_mod.DensityTable]:
    """ingest-free core: density fit, featurize, moments, factorize, score."""
    order = ngram if ngram is not None else cfg.ngram
    tok = cfg.tokenizer_config()
    table = feat_mod.fit_density(corpus, order, tok)
    matrix = feat_mod.build_matrix(corpus, table, tok, l_cap=cfg.l_cap)
    model = maha_mod.fit_moments(matrix)
    model = maha_mod.regularized_factorize(model, cfg.epsilon_policy())
    scores = maha_mod.score_all(model, matrix, threads=cfg.resolved_threads())
    return scores, model, table


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(
        json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def cmd_score(cfg: RunConfig) -> int:
    """ingest -> fit_density -> build_matrix -> moments -> factorize -> score_all."""
    cfg.validate()
    corpus = _ingest(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    scores, model, table = run_score_pipeline(corpus, cfg)

    art = _Artifacts()
    try:
        scores_path = art.add(out / "scores.csv")
        maha_mod.write_scores_csv(scores, corpus, scores_path)

        density_csv = art.add(out / "density.csv")
        density_json = art.add(out / "density.json")
        feat_mod.save_density(table, density_csv, density_json)

        model_bin = art.add(out / "model.bin")
        model_json = art.add(out / "model.json")
        feature_cfg_hash = _feature_config_hash(cfg)
        maha_mod.save_model(model, model_bin, model_json, feature_config_hash=feature_cfg_hash)

        meta = {
            "pipeline": cfg.pipeline_dict(),
            "input": {"path": cfg.input, "hash": sha256_file(cfg.input)},
            "n": len(corpus),
            "d": model.d,
            "epsilon": model.epsilon,
            "source_descriptor": corpus.source_descriptor,
            "artifacts": {
                p.name: sha256_file(p)
                for p in (scores_path, density_csv, density_json, model_bin, model_json)
            },
        }
        meta_path = art.add(out / ("scores" + META_SUFFIX))
        _write_json(meta_path, meta)
    except BaseException:
        art.cleanup()
        raise

    print(f"scored {len(corpus)} examples (d={model.d}, epsilon={model.epsilon:g}) -> {out}")
    return 0


def _feature_config_hash(cfg: RunConfig) -> str:
    from .hashing import sha256_json

    return sha256_json(
        {
            "ngram": cfg.ngram,
            "tokenizer": cfg.tokenizer_config().to_dict(),
            "l_cap": cfg.l_cap,
        }
    )


def _load_scores_with_meta(cfg: RunConfig, scores_path: Path) -> tuple[
    corpus_mod.Corpus, maha_mod.ScoreVector, dict
]:
    """Common staleness-checked load for sample/analyze."""
    if not scores_path.is_file():
        raise FileNotFoundError(f"scores file not found: {scores_path}")
    meta_path = scores_path.with_name(scores_path.stem + META_SUFFIX)
    if not meta_path.is_file():
        raise ValueError(f"missing metadata sidecar {meta_path.name}; rerun `score`")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))

    recorded = meta["artifacts"].get(scores_path.name)
    actual = sha256_file(scores_path)
    if recorded != actual:
        raise StaleScoresError(
            f"{scores_path.name} hash {actual} does not match recorded {recorded}"
        )

    # Scores are bound to the parse settings they were computed under; only
    # the input path may be overridden (e.g. a moved file with equal bytes).
    if not cfg.input:
        cfg.input = meta["input"]["path"]
    cfg.format = meta["pipeline"]["format"]
    cfg.context_field = meta["pipeline"]["context_field"]
    cfg.title_field = meta["pipeline"]["title_field"]
    cfg.id_field = meta["pipeline"]["id_field"]
    input_path = Path(cfg.input)
    if not input_path.is_file():
        raise FileNotFoundError(f"input corpus not found: {input_path}")
    input_hash = sha256_file(input_path)
    if input_hash != meta["input"]["hash"]:
        raise StaleScoresError(
            f"input corpus {input_path} hash {input_hash} does not match the hash "
            f"recorded when scores were computed ({meta['input']['hash']})"
        )

    corpus = corpus_mod.ingest_file(input_path, cfg.format, cfg.jsonl_fields())
    if len(corpus) != int(meta["n"]):
        raise StaleScoresError(
            f"corpus has {len(corpus)} examples but scores were computed over {meta['n']}"
        )
    columns = maha_mod.read_scores_csv(scores_path)
    epsilon = meta.get("epsilon") or 0.0
    scores = maha_mod.ScoreVector(scores=columns["score"], model_epsilon=float(epsilon))
    return corpus, scores, meta


def cmd_sample(cfg: RunConfig, scores_path: str | Path) -> int:
    """Select low/mutual/high subsets from persisted scores and write them out."""
    cfg.validate()
    corpus, scores, meta = _load_scores_with_meta(cfg, Path(scores_path))
    spec = cfg.selection_spec()
    if spec.strategy == "bucketed":
        selection = sampler_mod.select_bucketed(scores, corpus.char_lengths(), spec)
    else:
        selection = sampler_mod.select_global(scores, spec)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    art = _Artifacts()
    try:
        subset_name = "subset.jsonl" if cfg.subset_format == "jsonl" else "subset.json"
        subset_path = art.add(out / subset_name)
        with open(subset_path, "wb") as sink:
            written = corpus_mod.write_subset(corpus, selection, sink, cfg.subset_format, scores)

        selection_csv = art.add(out / "selection.csv")
        sampler_mod.write_selection_csv(selection, corpus, scores, selection_csv)

        manifest = {
            "policy_echo": selection.policy_echo,
            "epsilon": scores.model_epsilon,
            "inputs": {
                "corpus": meta["input"]["hash"],
                "scores.csv": meta["artifacts"]["scores.csv"],
            },
            "counts": {
                "low": len(selection.low),
                "high": len(selection.high),
                "mean_proximal": len(selection.mean_proximal),
                "written": written,
            },
            "artifacts": {
                subset_path.name: sha256_file(subset_path),
                selection_csv.name: sha256_file(selection_csv),
            },
        }
        manifest_path = art.add(out / "selection_manifest.json")
        _write_json(manifest_path, manifest)
    except BaseException:
        art.cleanup()
        raise

    print(f"sampled {written} examples ({len(selection.low)} low / "
          f"{len(selection.mean_proximal)} mutual / {len(selection.high)} high) -> {out}")
    return 0


def cmd_analyze(cfg: RunConfig, scores_path: str | Path) -> int:
    """Distribution stats, histogram, and per-order length correlation report."""
    cfg.validate()
    corpus, scores, meta = _load_scores_with_meta(cfg, Path(scores_path))

    stats = analyze_mod.moments_stats(scores)
    char_lengths = corpus.char_lengths().astype(np.float64)

    # The persisted scores cover the order they were computed at; other
    # requested orders are recomputed in memory with the same pipeline
    # settings.  A degenerate corpus (all contexts equal length) reports
    # the correlation as an undefined marker instead of failing.
    pipeline_cfg = RunConfig.from_dict({**meta["pipeline"], "input": cfg.input, "out_dir": cfg.out_dir, "threads": cfg.threads})
    primary_order = int(meta["pipeline"]["ngram"])
    pearson_by_order: dict[int, float | None] = {}
    for order in cfg.orders:
        if order == primary_order:
            vector = scores
        else:
            vector, _, _ = run_score_pipeline(corpus, pipeline_cfg, ngram=order)
        try:
            pearson_by_order[order] = analyze_mod.pearson(char_lengths, vector.scores)
        except StatError:
            pearson_by_order[order] = None

    report_dir = Path(cfg.out_dir) / "report"
    art = _Artifacts()
    try:
        art.add(report_dir / "scores.csv")
        art.add(report_dir / "histogram.csv")
        art.add(report_dir / "summary.json")
        art.add(report_dir / "manifest.json")
        analyze_mod.emit_report(
            corpus,
            scores,
            None,
            stats,
            pearson_by_order,
            report_dir,
            bins=cfg.bins,
            dimension=int(meta["d"]),
            input_hashes={
                "corpus": meta["input"]["hash"],
                "scores.csv": meta["artifacts"]["scores.csv"],
            },
        )
    except BaseException:
        art.cleanup()
        raise

    kurt = stats.excess_kurtosis
    kurt_text = f"{kurt:.3f}" if kurt is not None else "undefined"
    print(f"analyzed {len(corpus)} scores (excess kurtosis {kurt_text}) -> {report_dir}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abnormality",
        description="Score corpus examples by Mahalanobis abnormality of their "
        "positional n-gram densities, then prune and analyze.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--input", help="corpus file path")
        p.add_argument("--format", choices=["squad", "jsonl"], help="corpus format")
        p.add_argument("--context-field", help="JSONL context field name")
        p.add_argument("--title-field", help="JSONL title field name")
        p.add_argument("--id-field", help="JSONL id field name")
        p.add_argument("--out-dir", help="output directory")
        p.add_argument("--threads", type=int, help="worker threads (0 = all cores); never changes results")

    score_p = sub.add_parser("score", help="featurize and score every example")
    add_common(score_p)
    score_p.add_argument("--ngram", type=int, help="n-gram order (default 1)")
    score_p.add_argument("--lowercase", action=argparse.BooleanOptionalAction, default=None)
    score_p.add_argument(
        "--strip-edge-punct", action=argparse.BooleanOptionalAction, default=None,
        help="strip leading/trailing punctuation from tokens",
    )
    score_p.add_argument("--l-cap", type=int, help="cap feature length (covariance is LxL)")
    score_p.add_argument("--epsilon-fixed", type=float, help="use exactly this shrinkage epsilon")
    score_p.add_argument("--epsilon-base-scale", type=float, help="shrinkage schedule base scale")
    score_p.add_argument("--epsilon-max-exponent", type=int, help="shrinkage schedule max exponent")
    score_p.add_argument("--seed", type=int, help="seed echoed into config (pipeline itself is deterministic)")

    sample_p = sub.add_parser("sample", help="select low/mutual/high subsets from scores")
    add_common(sample_p)
    sample_p.add_argument("--scores", required=True, help="scores.csv produced by `score`")
    sample_p.add_argument("--k-low", type=int, help="low-tail count (default 3500)")
    sample_p.add_argument("--k-high", type=int, help="high-tail count (default 3500)")
    sample_p.add_argument("--k-mean", type=int, help="mean-proximal count (default 3500)")
    sample_p.add_argument("--strategy", choices=["global", "bucketed"], help="selection strategy")
    sample_p.add_argument("--bucket-width", type=int, help="bucket width in characters (default 250)")
    sample_p.add_argument(
        "--disjoint", action=argparse.BooleanOptionalAction, default=None,
        help="keep the three categories disjoint (default on)",
    )
    sample_p.add_argument("--subset-format", choices=["jsonl", "squad"], help="subset output format")

    analyze_p = sub.add_parser("analyze", help="distribution stats and report bundle")
    add_common(analyze_p)
    analyze_p.add_argument("--scores", required=True, help="scores.csv produced by `score`")
    analyze_p.add_argument("--orders", help="comma-separated n-gram orders for length correlation, e.g. 1,3")
    analyze_p.add_argument("--bins", type=int, help="histogram bin count (default 100)")

    return parser


_FLAG_TO_FIELD = {
    "input": "input",
    "format": "format",
    "context_field": "context_field",
    "title_field": "title_field",
    "id_field": "id_field",
    "out_dir": "out_dir",
    "threads": "threads",
    "ngram": "ngram",
    "lowercase": "lowercase",
    "strip_edge_punct": "strip_edge_punctuation",
    "l_cap": "l_cap",
    "epsilon_fixed": "epsilon_fixed",
    "epsilon_base_scale": "epsilon_base_scale",
    "epsilon_max_exponent": "epsilon_max_exponent",
    "seed": "seed",
    "k_low": "k_low",
    "k_high": "k_high",
    "k_mean": "k_mean",
    "strategy": "strategy",
    "bucket_width": "bucket_width",
    "disjoint": "disjoint",
    "subset_format": "subset_format",
    "bins": "bins",
}


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for flag, field in _FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, field, value)
    orders = getattr(args, "orders", None)
    if orders is not None:
        try:
            cfg.orders = tuple(int(o) for o in str(orders).split(",") if o.strip())
        except ValueError as e:
            raise ValueError(f"cannot parse --orders {orders!r}: {e}") from e
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0

    try:
        cfg = _config_from_args(args)
        if args.command == "score":
            return cmd_score(cfg)
        if args.command == "sample":
            return cmd_sample(cfg, args.scores)
        if args.command == "analyze":
            return cmd_analyze(cfg, args.scores)
        raise ValueError(f"unknown command {args.command!r}")
    except SingularityError as e:
        print(f"abnormality: numerical error: {e}", file=sys.stderr)
        return 3
    except (ParseError, SchemaError, StaleScoresError, FitError) as e:
        print(f"abnormality: data error: {e}", file=sys.stderr)
        return 2
    except (CapacityError, ValueError, FileNotFoundError, IsADirectoryError, NotADirectoryError) as e:
        print(f"abnormality: {e}", file=sys.stderr)
        return 1
    except StatError as e:
        print(f"abnormality: data error: {e}", file=sys.stderr)
        return 2
    except AbnormalityError as e:
        print(f"abnormality: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"abnormality: io error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
