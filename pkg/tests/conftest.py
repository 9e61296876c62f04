"""Shared fixtures: the seeded synthetic corpus and a model trained on it."""

from __future__ import annotations

import time
from dataclasses import dataclass

import pytest

from subspace_lvq import (
    LabeledSubspace,
    ModelState,
    TrainConfig,
    load_stopwords,
    train,
)
from subspace_lvq.corpus import CaseRecord, corpus_to_subspaces, split
from subspace_lvq.synth import SyntheticCorpus, generate

SYNTH_SEED = 7
SPLIT_SEED = 11
TRAIN_SEED = 3
SUBSPACE_DIM = 10


@dataclass
class TrainedSetup:
    corpus: SyntheticCorpus
    stoplist: frozenset
    train_records: list[CaseRecord]
    test_records: list[CaseRecord]
    train_examples: list[LabeledSubspace]
    test_examples: list[LabeledSubspace]
    model: ModelState
    train_seconds: float


@pytest.fixture(scope="session")
def stoplist():
    return load_stopwords()


@pytest.fixture(scope="session")
def synth_corpus():
    return generate(docs_per_class=200, dim=50, seed=SYNTH_SEED)


@pytest.fixture(scope="session")
def trained(synth_corpus, stoplist) -> TrainedSetup:
    train_records, test_records = split(synth_corpus.records, 0.8, seed=SPLIT_SEED)
    train_examples, skipped_train = corpus_to_subspaces(
        train_records, synth_corpus.table, stoplist, SUBSPACE_DIM)
    test_examples, skipped_test = corpus_to_subspaces(
        test_records, synth_corpus.table, stoplist, SUBSPACE_DIM)
    assert not skipped_train and not skipped_test
    config = TrainConfig(subspace_dim=SUBSPACE_DIM, seed=TRAIN_SEED, epochs=30)
    start = time.perf_counter()
    model = train(train_examples, config)
    elapsed = time.perf_counter() - start
    return TrainedSetup(
        corpus=synth_corpus,
        stoplist=stoplist,
        train_records=train_records,
        test_records=test_records,
        train_examples=train_examples,
        test_examples=test_examples,
        model=model,
        train_seconds=elapsed,
    )
