"""Seeded end-to-end stages: build-vocab, pretrain, finetune, eval, attack,
explain. Every run writes a manifest and accumulates one metrics.json; all
outputs are byte-reproducible for a fixed config and seed."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Sequence

import numpy as np

import soundexlm
from soundexlm import kernels
from soundexlm.attack import (
    AttackConfig,
    SubstitutionDictionary,
    evaluate_robustness,
    macro_f1,
)
from soundexlm.checkpoint import load_checkpoint, save_checkpoint
from soundexlm.classifier import ModelTextClassifier
from soundexlm.config import ConfigError, ExperimentConfig, config_as_text
from soundexlm.data import load_dataset, load_pretrain_corpus
from soundexlm.encoding import (
    VC,
    apply_mlm_mask,
    build_finetune,
    build_samlm_pretrain,
    build_smlm_pretrain,
    collate,
)
from soundexlm.explain import shap_exact, shap_sampled, write_report_files
from soundexlm.model import (
    EncoderConfig,
    OptimizerConfig,
    init_parameters,
    train,
)
from soundexlm.explain import TooManyWords
from soundexlm.tokenizer import Vocab, build_vocab

DEFAULT_STAGES = ("build-vocab", "pretrain", "finetune", "eval", "attack")
ALL_STAGES = DEFAULT_STAGES + ("explain",)


class PipelineError(RuntimeError):
    """Non-config, non-divergence stage failure (missing artifacts etc.)."""


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _encoder_config(cfg: ExperimentConfig, vocab_size: int,
                    num_classes: int | None = None) -> EncoderConfig:
    return EncoderConfig(
        vocab_size=vocab_size,
        hidden_dim=cfg.hidden_dim,
        num_layers=cfg.num_layers,
        num_heads=cfg.num_heads,
        ff_dim=cfg.ff_dim,
        max_len=cfg.max_len,
        dropout_rate=cfg.dropout_rate,
        num_classes=num_classes,
    )


def _mask_seed(seed: int, epoch: int, batch_index: int) -> int:
    return int(np.random.SeedSequence((seed, epoch, batch_index)).generate_state(1)[0])


def _pretrain_builder(flavor: str):
    return build_smlm_pretrain if flavor == "smlm" else build_samlm_pretrain


class _Workspace:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.vocab_file = self.out / "vocab.txt"
        self.pretrain_ckpt = self.out / "pretrain.ckpt"
        self.finetune_ckpt = self.out / "finetune.ckpt"
        self.labels_file = self.out / "labels.json"
        self.metrics_file = self.out / "metrics.json"
        self.manifest_file = self.out / "manifest.json"
        self.report_html = self.out / "report.html"
        self.report_json = self.out / "report.json"

    def update_metrics(self, stage: str, payload: dict) -> None:
        metrics = {}
        if self.metrics_file.exists():
            metrics = json.loads(self.metrics_file.read_text(encoding="utf-8"))
        metrics[stage] = payload
        self.metrics_file.write_text(
            json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def load_vocab(self) -> Vocab:
        if self.cfg.vocab_path:
            path = Path(self.cfg.vocab_path)
            if not path.exists():
                raise ConfigError(f"vocab file not found: {path}")
            return Vocab.load(path)
        if not self.vocab_file.exists():
            raise PipelineError(
                f"no vocabulary at {self.vocab_file}; run the build-vocab stage"
            )
        return Vocab.load(self.vocab_file)

    def load_classes(self) -> list[str]:
        if not self.labels_file.exists():
            raise PipelineError(
                f"no label set at {self.labels_file}; run the finetune stage"
            )
        return json.loads(self.labels_file.read_text(encoding="utf-8"))["classes"]

    def load_classifier(self) -> ModelTextClassifier:
        if not self.finetune_ckpt.exists():
            raise PipelineError(
                f"no fine-tuned model at {self.finetune_ckpt}; run finetune"
            )
        params, enc_cfg = load_checkpoint(self.finetune_ckpt)
        return ModelTextClassifier(
            enc_cfg, params, self.load_vocab(), self.cfg.flavor,
            self.load_classes(), max_len=self.cfg.max_len,
        )


def write_manifest(ws: _Workspace) -> None:
    cfg = ws.cfg
    config_text = config_as_text(cfg)
    inputs = {}
    for name in ("train_path", "dev_path", "test_path", "pretrain_path",
                 "dict_path", "vocab_path"):
        value = getattr(cfg, name)
        if value and Path(value).exists():
            inputs[name] = {"path": value, "sha256": _sha256(Path(value))}
    manifest = {
        "package_version": soundexlm.__version__,
        "kernels_backend": kernels.BACKEND,
        "config": config_text,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "seed": cfg.seed,
        "inputs": inputs,
    }
    ws.manifest_file.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _require_file(path: str, what: str) -> Path:
    if not path:
        raise ConfigError(f"{what} is not configured")
    p = Path(path)
    if not p.exists():
        raise PipelineError(f"{what} not found: {p}")
    return p


def stage_build_vocab(ws: _Workspace) -> None:
    cfg = ws.cfg
    if cfg.vocab_path:
        _ = ws.load_vocab()  # declared vocab must exist; nothing to build
        ws.update_metrics("build-vocab", {"reused": cfg.vocab_path})
        return
    corpus: list[str] = []
    if cfg.pretrain_path:
        corpus.extend(load_pretrain_corpus(_require_file(cfg.pretrain_path, "pretrain corpus")))
    if cfg.train_path:
        corpus.extend(
            ex.text for ex in load_dataset(_require_file(cfg.train_path, "train split"))
        )
    if not corpus:
        raise ConfigError("build-vocab needs pretrain_path or train_path")
    vocab = build_vocab(corpus, cfg.vocab_size, ensure_alphabet=True)
    vocab.save(ws.vocab_file)
    ws.update_metrics(
        "build-vocab", {"size": len(vocab), "path": str(ws.vocab_file)}
    )


def stage_pretrain(ws: _Workspace, dump_batch: str | None = None) -> None:
    cfg = ws.cfg
    if cfg.flavor == VC:
        ws.update_metrics("pretrain", {"skipped": "vc flavor trains from scratch"})
        return
    vocab = ws.load_vocab()
    sentences = load_pretrain_corpus(_require_file(cfg.pretrain_path, "pretrain corpus"))
    builder = _pretrain_builder(cfg.flavor)
    inputs = [builder(vocab, s, max_len=cfg.max_len) for s in sentences]

    enc_cfg = _encoder_config(cfg, len(vocab))
    params = init_parameters(enc_cfg, seed=cfg.seed)

    def batches():
        for epoch in range(cfg.pretrain_epochs):
            order = np.random.default_rng(
                np.random.SeedSequence((cfg.seed, 101, epoch))
            ).permutation(len(inputs))
            for b, start in enumerate(range(0, len(inputs), cfg.batch_size)):
                chunk = [inputs[i] for i in order[start:start + cfg.batch_size]]
                yield apply_mlm_mask(
                    vocab, chunk, cfg.mask_rate,
                    rng_seed=_mask_seed(cfg.seed, epoch, b),
                )

    if dump_batch:
        first = next(batches())
        tensors = {
            name: getattr(first, name).astype(np.float32)
            for name in ("input_ids", "labels", "attention_mask", "segments")
        }
        save_checkpoint(tensors, enc_cfg, dump_batch)

    params, losses = train(
        enc_cfg, params, batches(), objective="mlm",
        opt=OptimizerConfig(learning_rate=cfg.pretrain_lr), seed=cfg.seed,
    )
    save_checkpoint(params, enc_cfg, ws.pretrain_ckpt)
    ws.update_metrics("pretrain", {
        "sentences": len(inputs),
        "epochs": cfg.pretrain_epochs,
        "steps": len(losses),
        "loss_curve": losses,
        "final_loss": losses[-1] if losses else None,
        "checkpoint": str(ws.pretrain_ckpt),
    })


def stage_finetune(ws: _Workspace) -> None:
    cfg = ws.cfg
    vocab = ws.load_vocab()
    train_set = load_dataset(_require_file(cfg.train_path, "train split"))
    classes = sorted({ex.label for ex in train_set})
    ws.labels_file.write_text(
        json.dumps({"classes": classes}, sort_keys=True) + "\n", encoding="utf-8"
    )
    class_index = {name: i for i, name in enumerate(classes)}

    enc_cfg = _encoder_config(cfg, len(vocab), num_classes=len(classes))
    params = init_parameters(enc_cfg, seed=cfg.seed)
    if cfg.flavor != VC and ws.pretrain_ckpt.exists():
        pretrained, _ = load_checkpoint(ws.pretrain_ckpt)
        params.update({k: v for k, v in pretrained.items() if k in params})

    encoded = [
        build_finetune(vocab, ex.text, cfg.flavor, max_len=cfg.max_len)
        for ex in train_set
    ]
    labels = np.array([class_index[ex.label] for ex in train_set], dtype=np.int64)

    def batches():
        for epoch in range(cfg.finetune_epochs):
            order = np.random.default_rng(
                np.random.SeedSequence((cfg.seed, 202, epoch))
            ).permutation(len(encoded))
            for start in range(0, len(encoded), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                yield collate([encoded[i] for i in idx]), labels[idx]

    params, losses = train(
        enc_cfg, params, batches(), objective="classify",
        opt=OptimizerConfig(learning_rate=cfg.finetune_lr), seed=cfg.seed + 1,
    )
    save_checkpoint(params, enc_cfg, ws.finetune_ckpt)

    clf = ModelTextClassifier(
        enc_cfg, params, vocab, cfg.flavor, classes, max_len=cfg.max_len
    )
    payload = {
        "examples": len(train_set),
        "epochs": cfg.finetune_epochs,
        "steps": len(losses),
        "loss_curve": losses,
        "final_loss": losses[-1] if losses else None,
        "classes": classes,
        "checkpoint": str(ws.finetune_ckpt),
        "pretrained": cfg.flavor != VC and ws.pretrain_ckpt.exists(),
    }
    for split, path in (("dev", cfg.dev_path), ("test", cfg.test_path)):
        if path and Path(path).exists():
            acc, f1 = _clean_metrics(clf, load_dataset(path))
            payload[f"{split}_accuracy"] = acc
            payload[f"{split}_macro_f1"] = f1
    ws.update_metrics("finetune", payload)


def _clean_metrics(clf: ModelTextClassifier, examples) -> tuple[float, float]:
    class_index = {name: i for i, name in enumerate(clf.classes)}
    labels = [class_index[ex.label] for ex in examples]
    preds: list[int] = []
    chunk = 64
    for start in range(0, len(examples), chunk):
        probs = clf.predict_proba_texts(
            [ex.text for ex in examples[start:start + chunk]]
        )
        preds.extend(int(i) for i in probs.argmax(axis=1))
    accuracy = float(np.mean([p == y for p, y in zip(preds, labels)]))
    return accuracy, macro_f1(preds, labels)


def stage_eval(ws: _Workspace) -> None:
    cfg = ws.cfg
    clf = ws.load_classifier()
    test_set = load_dataset(_require_file(cfg.test_path, "test split"))
    accuracy, f1 = _clean_metrics(clf, test_set)
    ws.update_metrics("eval", {
        "examples": len(test_set),
        "accuracy": accuracy,
        "macro_f1": f1,
    })


def stage_attack(ws: _Workspace) -> None:
    cfg = ws.cfg
    clf = ws.load_classifier()
    dictionary = SubstitutionDictionary.load(
        _require_file(cfg.dict_path, "substitution dictionary")
    )
    test_set = load_dataset(_require_file(cfg.test_path, "test split"))
    if cfg.attack_examples:
        test_set = test_set[: cfg.attack_examples]
    attack_cfg = AttackConfig(
        max_words_perturbed=cfg.max_words_perturbed or None,
        candidate_budget=cfg.candidate_budget,
        rng_seed=cfg.seed,
    )
    report, results = evaluate_robustness(clf, test_set, dictionary, attack_cfg)
    per_example = []
    for result in results:
        if result is None:
            per_example.append(None)
            continue
        per_example.append({
            "original": result.original,
            "adversarial": result.adversarial,
            "success": result.success,
            "perturbed_word_indices": list(result.perturbed_indices),
            "queries": result.queries,
            "pr": result.pr,
        })
    ws.update_metrics("attack", {
        "ba": report.ba,
        "aa": report.aa,
        "bf1": report.bf1,
        "af1": report.af1,
        "mean_pr": report.mean_pr,
        "pda": report.pda,
        "per_example": per_example,
    })


def stage_explain(ws: _Workspace) -> None:
    cfg = ws.cfg
    clf = ws.load_classifier()
    text = cfg.explain_text
    if not text:
        test_set = load_dataset(_require_file(cfg.test_path, "test split"))
        text = test_set[0].text
    words = text.split()
    if not words:
        raise ConfigError("explain_text has no words")
    target = int(np.asarray(clf.predict_proba(words)).argmax())
    if len(words) <= cfg.exact_threshold:
        report = shap_exact(clf, words, target, exact_threshold=cfg.exact_threshold)
        mode = "exact"
    else:
        report = shap_sampled(
            clf, words, target,
            num_permutations=cfg.explain_permutations, seed=cfg.seed,
        )
        mode = "sampled"
    write_report_files(report, ws.report_html, ws.report_json)
    ws.update_metrics("explain", {
        "text": text,
        "mode": mode,
        "target_class": clf.classes[target],
        "base_value": report.base_value,
        "shap_values": dict(zip(report.words, report.shap_values)),
        "report_html": str(ws.report_html),
        "report_json": str(ws.report_json),
    })


_STAGE_FNS = {
    "build-vocab": stage_build_vocab,
    "pretrain": stage_pretrain,
    "finetune": stage_finetune,
    "eval": stage_eval,
    "attack": stage_attack,
    "explain": stage_explain,
}


def run_pipeline(
    config: ExperimentConfig,
    stages: Sequence[str] = DEFAULT_STAGES,
    dump_batch: str | None = None,
) -> Path:
    """Run the requested stages in canonical order; returns the output dir."""
    unknown = [s for s in stages if s not in _STAGE_FNS]
    if unknown:
        raise ConfigError(f"unknown stages {unknown}; choose from {ALL_STAGES}")
    ordered = [s for s in ALL_STAGES if s in stages]
    ws = _Workspace(config)
    write_manifest(ws)
    for name in ordered:
        try:
            if name == "pretrain":
                stage_pretrain(ws, dump_batch=dump_batch)
            else:
                _STAGE_FNS[name](ws)
        except (ConfigError,):
            raise
        except FileNotFoundError as exc:
            raise PipelineError(f"stage {name}: {exc}") from exc
    return ws.out
