import pytest

from dpn.config.loader import build_run_config
from dpn.data.dataset import prepare_corpus
from dpn.models.ablation import ABLATIONS
from dpn.training.trainer import evaluate_loss, train_loop


def train_copy(ablation_id, steps):
    config = build_run_config(
        preset="tiny",
        ablation=ablation_id,
        task="copy",
        overrides=[f"train.max_steps={steps}", "train.valid_every=250"],
    )
    corpus = prepare_corpus(config)
    state = train_loop(config, corpus.train, corpus.valid)
    _, accuracy = evaluate_loss(state.params, corpus.valid, config.train.max_tokens)
    return accuracy


@pytest.mark.slow
def test_full_model_learns_copy():
    assert train_copy("M9", 2000) >= 0.99


@pytest.mark.slow
@pytest.mark.parametrize("ablation_id", list(ABLATIONS))
def test_every_path_combination_learns_copy(ablation_id):
    assert train_copy(ablation_id, 5000) >= 0.95
