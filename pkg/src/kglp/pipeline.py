"""Stage-based orchestration: ingest, retrieve, fuse, train, rerank, eval.

Each stage writes its artifacts atomically (temp file + rename) into its own
subdirectory of the stage directory, together with a manifest recording a
format version, the hash of the resolved configuration, and content hashes
of its input files. Re-running a stage whose manifest matches the current
config and inputs is a no-op. Reports contain no timestamps or environment
detail, so identical configurations yield byte-identical reports.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import torch

from . import entity_typing, fusion, pathrules, pq, rerank
from .candidates import CandidateList, read_candidate_lists, write_candidate_lists
from .config import PipelineConfig
from .evaluation import EvalSplit, carve_dev_split, mrr_at_10, model_accuracy, recall_at_cap
from .features import load_features
from .graph import KnowledgeGraph, ingest_triples
from .kge import EmbeddingInit, build_model, load_checkpoint, save_checkpoint, train

logger = logging.getLogger("kglp")

STAGES = ("ingest", "retrieve", "fuse", "train", "rerank", "eval")
_DEPENDS = {
    "ingest": (),
    "retrieve": ("ingest",),
    "fuse": ("retrieve",),
    "train": ("ingest",),
    "rerank": ("fuse", "train"),
    "eval": ("rerank",),
}
FORMAT_VERSION = 1


class PipelineError(RuntimeError):
    pass


def config_hash(cfg: PipelineConfig) -> str:
    blob = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=str)
    return hashlib.blake2b(blob.encode(), digest_size=8).hexdigest()


def _file_hash(path: Path) -> str:
    h = hashlib.blake2b(digest_size=8)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@contextmanager
def atomic_output(path: Path):
    """Yield a temp path in the target directory, renamed over on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_text(path: Path, text: str) -> None:
    with atomic_output(path) as tmp:
        tmp.write_text(text, encoding="utf-8")


class PipelineRun:
    """One configured run rooted at a stage directory."""

    def __init__(self, cfg: PipelineConfig, stage_dir):
        self.cfg = cfg
        self.stage_dir = Path(stage_dir)
        self.cfg_hash = config_hash(cfg)
        if cfg.deterministic:
            torch.set_num_threads(1)

    # -- manifest handling ------------------------------------------------

    def _dir(self, stage: str) -> Path:
        return self.stage_dir / stage

    def _manifest_path(self, stage: str) -> Path:
        return self._dir(stage) / "manifest.json"

    def _stage_done(self, stage: str) -> bool:
        return self._manifest_path(stage).exists()

    def _check_deps(self, stage: str) -> None:
        pending = [s for s in STAGES if s in self._transitive_deps(stage)
                   and not self._stage_done(s)]
        if pending:
            raise PipelineError(f"requires stage: {pending[0]}")

    def _transitive_deps(self, stage: str) -> set[str]:
        out: set[str] = set()
        frontier = list(_DEPENDS[stage])
        while frontier:
            s = frontier.pop()
            if s not in out:
                out.add(s)
                frontier.extend(_DEPENDS[s])
        return out

    def _input_hashes(self, stage: str) -> dict[str, str]:
        if stage == "ingest":
            files = [Path(self.cfg.dataset.triples)]
            for name in ("entity_features", "relation_features", "upsample_weights"):
                value = getattr(self.cfg.dataset, name)
                if value:
                    files.append(Path(value))
        else:
            files = []
            for dep in _DEPENDS[stage]:
                dep_dir = self._dir(dep)
                files.extend(sorted(p for p in dep_dir.iterdir()
                                    if p.name != "manifest.json"))
        return {str(p): _file_hash(p) for p in files}

    def _manifest(self, stage: str) -> dict:
        return {"stage": stage, "format_version": FORMAT_VERSION,
                "config_hash": self.cfg_hash,
                "inputs": self._input_hashes(stage)}

    def _is_current(self, stage: str) -> bool:
        path = self._manifest_path(stage)
        if not path.exists():
            return False
        try:
            stored = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return False
        return stored == self._manifest(stage)

    def _finish(self, stage: str) -> None:
        manifest = self._manifest(stage)
        _write_text(self._manifest_path(stage),
                    json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    # -- artifact loading -------------------------------------------------

    def _read_triples(self, name: str) -> np.ndarray:
        path = self._dir("ingest") / name
        rows = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                h, r, t = stripped.split()
                rows.append((int(h), int(r), int(t)))
        return np.asarray(rows, dtype=np.int64).reshape(-1, 3)

    def _meta(self) -> dict:
        path = self._dir("ingest") / "meta.json"
        return json.loads(path.read_text(encoding="utf-8"))

    def _train_graph(self) -> KnowledgeGraph:
        meta = self._meta()
        return KnowledgeGraph.from_triples(self._read_triples("train.txt"),
                                           meta["num_entities"], meta["num_relations"])

    def _dev_split(self) -> EvalSplit:
        dev = self._read_triples("dev.txt")
        train_arr = self._read_triples("train.txt")
        known: dict[tuple[int, int], set[int]] = {}
        for h, r, t in np.concatenate([train_arr, dev]):
            known.setdefault((int(h), int(r)), set()).add(int(t))
        return EvalSplit(
            queries=tuple((int(h), int(r)) for h, r, _ in dev),
            answers=tuple(int(t) for _, _, t in dev),
            known_tails={q: frozenset(s) for q, s in known.items()})

    def _retrieval_tags(self) -> list[str]:
        tags = [f"rule-{rule}" for rule in self.cfg.retrieval.rules]
        if self.cfg.retrieval.pie.enabled:
            tags.extend(f"pie-{s}" for s in self.cfg.retrieval.pie.sample_sizes)
        if self.cfg.retrieval.semantic.enabled:
            tags.append("semantic")
        return tags

    def _read_lists(self, stage: str, tag: str, cap: int) -> list[CandidateList]:
        return read_candidate_lists(self._dir(stage) / f"{tag}.cands", cap)

    # -- stages -----------------------------------------------------------

    def run_stage(self, stage: str) -> None:
        if stage not in STAGES:
            raise PipelineError(f"unknown stage {stage!r}")
        self._check_deps(stage)
        if self._is_current(stage):
            logger.info("stage %s up to date; skipping", stage)
            return
        logger.info("running stage %s", stage)
        getattr(self, f"_stage_{stage}")()
        self._finish(stage)

    def run_all(self) -> None:
        for stage in STAGES:
            self.run_stage(stage)

    def _stage_ingest(self) -> None:
        ds = self.cfg.dataset
        kg = ingest_triples(ds.triples, ds.num_entities, ds.num_relations)
        train_arr, dev = carve_dev_split(kg.triples, self.cfg.split.dev_ratio,
                                         self.cfg.seed)
        if len(dev) == 0:
            raise PipelineError("dev split is empty; raise split.dev_ratio")
        header = f"# kglp triples v{FORMAT_VERSION} config={self.cfg_hash}\n"
        train_text = header + "".join(f"{h} {r} {t}\n" for h, r, t in train_arr)
        dev_text = header + "".join(
            f"{h} {r} {t}\n" for (h, r), t in zip(dev.queries, dev.answers))
        _write_text(self._dir("ingest") / "train.txt", train_text)
        _write_text(self._dir("ingest") / "dev.txt", dev_text)
        meta = {"format_version": FORMAT_VERSION, "config_hash": self.cfg_hash,
                "num_entities": kg.num_entities, "num_relations": kg.num_relations,
                "num_train": len(train_arr), "num_dev": len(dev)}
        _write_text(self._dir("ingest") / "meta.json",
                    json.dumps(meta, indent=2, sort_keys=True) + "\n")

    def _stage_retrieve(self) -> None:
        cfg = self.cfg.retrieval
        kg = self._train_graph()
        dev = self._dev_split()
        header = f"kglp candidates v{FORMAT_VERSION} config={self.cfg_hash}"

        def emit(tag: str, lists: list[CandidateList]) -> None:
            with atomic_output(self._dir("retrieve") / f"{tag}.cands") as tmp:
                write_candidate_lists(tmp, lists, header=header)

        tables = pathrules.build_count_tables(kg)
        for rule in cfg.rules:
            emit(f"rule-{rule}",
                 [pathrules.retrieve_by_rule(tables, rule, h, r, cfg.cap)
                  for h, r in dev.queries])
        if cfg.pie.enabled:
            priors = entity_typing.estimate_priors(kg)
            weights = None
            if self.cfg.dataset.upsample_weights:
                weights = entity_typing.load_upsample_weights(
                    self.cfg.dataset.upsample_weights, kg.num_relations)
            for size in cfg.pie.sample_sizes:
                model = entity_typing.fit_typing_model(
                    kg, size, weights, cfg.pie.smoothing, self.cfg.seed)
                emit(f"pie-{size}",
                     [entity_typing.pie_retrieve(
                         model, priors, kg, h, r, cfg.cap, seed=self.cfg.seed,
                         context_hops=cfg.pie.context_hops,
                         max_frontier=cfg.pie.max_frontier, source=f"pie-{size}")
                      for h, r in dev.queries])
        if cfg.semantic.enabled:
            ent = load_features(self.cfg.dataset.entity_features, kind="entity")
            rel = load_features(self.cfg.dataset.relation_features, kind="relation")
            index = pq.train_pq(ent, cfg.semantic.num_subspaces,
                                cfg.semantic.centroids, cfg.semantic.iters,
                                seed=self.cfg.seed)
            emit("semantic",
                 [pq.semantic_retrieve(index, rel, r, cfg.semantic.k, head=h)
                  for h, r in dev.queries])

    def _stage_fuse(self) -> None:
        dev = self._dev_split()
        cap = max(self.cfg.retrieval.cap, self.cfg.retrieval.semantic.k)
        per_model = {tag: self._read_lists("retrieve", tag, cap)
                     for tag in self._retrieval_tags()}
        reports = fusion.build_reports(per_model, dev)
        order = fusion.priority_order(reports)
        fused = fusion.infill_all(per_model, order, self.cfg.fusion.n)
        with atomic_output(self._dir("fuse") / "fused.cands") as tmp:
            write_candidate_lists(
                tmp, fused,
                header=f"kglp candidates v{FORMAT_VERSION} config={self.cfg_hash}")
        lines = [f"# kglp retrieval-report v{FORMAT_VERSION} config={self.cfg_hash}",
                 f"{'model_tag':<24} {'recall':>12} {'accuracy':>12} {'priority':>8}"]
        for r in sorted(reports, key=lambda r: r.priority_rank):
            lines.append(f"{r.model_tag:<24} {r.recall_at_cap:>12.6f} "
                         f"{r.accuracy:>12.6f} {r.priority_rank:>8}")
        fused_recall = recall_at_cap(fused, dev)
        fused_acc = model_accuracy(fused, dev)
        lines.append(f"{'fused':<24} {fused_recall:>12.6f} {fused_acc:>12.6f} "
                     f"{'-':>8}")
        _write_text(self._dir("fuse") / "retrieval_report.txt",
                    "\n".join(lines) + "\n")

    def _build_init(self, model_cfg, kg: KnowledgeGraph) -> EmbeddingInit:
        icfg = model_cfg.init
        if icfg.mode == "random":
            return EmbeddingInit(mode="random", projection=icfg.projection,
                                 activation=icfg.activation)
        feats = load_features(self.cfg.dataset.entity_features, kind="entity")
        return EmbeddingInit(mode=icfg.mode, features=feats,
                             projection=icfg.projection, activation=icfg.activation)

    def _stage_train(self) -> None:
        kg = self._train_graph()
        for mc in self.cfg.kge_models:
            logger.info("training model %s (%s)", mc.tag, mc.kind)
            init = self._build_init(mc, kg)
            model = build_model(mc.kind, kg, mc.dim, init, gamma=mc.gamma,
                                group_size=mc.group_size, seed=mc.train.seed)
            model, trace = train(model, kg.triples, mc.train,
                                 deterministic=self.cfg.deterministic)
            with atomic_output(self._dir("train") / f"{mc.tag}.ckpt") as tmp:
                save_checkpoint(model, tmp)
            loss_text = (f"# kglp loss-trace v{FORMAT_VERSION} config={self.cfg_hash}\n"
                         + "".join(f"{x!r}\n" for x in trace))
            _write_text(self._dir("train") / f"{mc.tag}.loss.txt", loss_text)

    def _score_sets(self, fused: list[CandidateList]) -> list[rerank.ModelScoreSet]:
        sets = []
        for mc in self.cfg.kge_models:
            model = load_checkpoint(self._dir("train") / f"{mc.tag}.ckpt")
            rows = []
            with torch.no_grad():
                for cl in fused:
                    if len(cl) == 0:
                        rows.append(np.zeros(0, dtype=np.float64))
                        continue
                    out = model.score_batch(
                        torch.tensor([cl.head]), torch.tensor([cl.relation]),
                        torch.as_tensor(cl.entities[None, :]))
                    rows.append(out[0].to(torch.float64).numpy())
            sets.append(rerank.ModelScoreSet(model_tag=mc.tag, scores=rows))
        return sets

    def _stage_rerank(self) -> None:
        dev = self._dev_split()
        fused = self._read_lists("fuse", "fused", self.cfg.fusion.n)
        score_sets = self._score_sets(fused)
        for s in score_sets:
            s.validate_against(fused)
        norm = self.cfg.rerank.normalization
        single = {}
        for s in score_sets:
            spec = rerank.EnsembleSpec(selected_models=(s.model_tag,),
                                       weights=(1.0,), normalization=norm)
            single[s.model_tag] = mrr_at_10(
                rerank.ensemble_predict(spec, [s], fused), dev)
        selected_tags, trace = rerank.greedy_select_with_trace(
            score_sets, fused, dev, normalization=norm)
        by_tag = {s.model_tag: s for s in score_sets}
        spec = rerank.grid_search_weights(
            [by_tag[t] for t in selected_tags], fused, dev,
            step=self.cfg.rerank.grid_step, normalization=norm,
            budget=self.cfg.rerank.budget)
        final = rerank.ensemble_predict(spec, score_sets, fused)
        with atomic_output(self._dir("rerank") / "ensemble.spec") as tmp:
            rerank.write_ensemble_spec(tmp, spec)
        with atomic_output(self._dir("rerank") / "final.cands") as tmp:
            write_candidate_lists(
                tmp, final,
                header=f"kglp candidates v{FORMAT_VERSION} config={self.cfg_hash}")
        with atomic_output(self._dir("rerank") / "top10.txt") as tmp:
            rerank.write_top10(tmp, final)
        lines = [f"# kglp model-report v{FORMAT_VERSION} config={self.cfg_hash}",
                 f"{'model_tag':<24} {'dev_mrr_at_10':>14} {'selected':>9}"]
        for tag in sorted(single):
            mark = "yes" if tag in selected_tags else "no"
            lines.append(f"{tag:<24} {single[tag]:>14.6f} {mark:>9}")
        lines.append("greedy_trace " + " ".join(f"{x:.6f}" for x in trace))
        _write_text(self._dir("rerank") / "model_report.txt",
                    "\n".join(lines) + "\n")

    def _stage_eval(self) -> None:
        dev = self._dev_split()
        fused = self._read_lists("fuse", "fused", self.cfg.fusion.n)
        final = self._read_lists("rerank", "final", self.cfg.fusion.n)
        metrics = {"recall_at_cap": recall_at_cap(fused, dev),
                   "mrr_at_10": mrr_at_10(final, dev),
                   "num_dev_queries": len(dev)}
        _write_text(self._dir("eval") / "metrics.json",
                    json.dumps({"format_version": FORMAT_VERSION,
                                "config_hash": self.cfg_hash, **metrics},
                               indent=2, sort_keys=True) + "\n")

    # -- report -----------------------------------------------------------

    def emit_report(self) -> Path:
        if not self._stage_done("eval"):
            raise PipelineError("requires stage: eval")
        retrieval_tbl = (self._dir("fuse") / "retrieval_report.txt").read_text(
            encoding="utf-8")
        model_tbl = (self._dir("rerank") / "model_report.txt").read_text(
            encoding="utf-8")
        spec_text = (self._dir("rerank") / "ensemble.spec").read_text(
            encoding="utf-8")
        metrics = json.loads(
            (self._dir("eval") / "metrics.json").read_text(encoding="utf-8"))
        lines = [f"# kglp run report v{FORMAT_VERSION} config={self.cfg_hash}",
                 "",
                 "== retrieval (dev split) ==",
                 retrieval_tbl.rstrip("\n"),
                 "",
                 "== embedding models (dev split) ==",
                 model_tbl.rstrip("\n"),
                 "",
                 "== ensemble ==",
                 spec_text.rstrip("\n"),
                 "",
                 "== final metrics ==",
                 f"recall_at_cap {metrics['recall_at_cap']!r}",
                 f"mrr_at_10 {metrics['mrr_at_10']!r}",
                 f"num_dev_queries {metrics['num_dev_queries']}",
                 ""]
        out = self.stage_dir / "report.txt"
        _write_text(out, "\n".join(lines))
        return out
