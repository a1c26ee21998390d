import numpy as np
import pytest

from xsell.prep import assemble_case_dataset
from xsell.schema import ContractType, CrossSellCase
from xsell.synth import GeneratorConfig, generate_population


@pytest.fixture(scope="session")
def small_population():
    """4,000-customer planted population shared across model-level tests."""
    cfg = GeneratorConfig(n_customers=4000, years=(2015, 2017), seed=20240)
    table, truth = generate_population(cfg)
    return table, truth


@pytest.fixture(scope="session")
def small_case_dataset(small_population):
    table, _ = small_population
    case = CrossSellCase(ContractType.POWER, ContractType.TV, 2016, 2017)
    return assemble_case_dataset(table, case, seed=20240)


def make_random_tree(rng: np.random.Generator, n_features: int, max_depth: int):
    """Random tree with node weights consistent down every split.

    Features repeat along paths on purpose so the attribution recursion's
    duplicate-feature handling gets exercised.
    """
    from xsell.tree import Tree

    children_left, children_right, feature, threshold, node_weight, value = [], [], [], [], [], []

    def add_node(weight: float, depth: int) -> int:
        slot = len(children_left)
        children_left.append(-1)
        children_right.append(-1)
        feature.append(-1)
        threshold.append(0.0)
        node_weight.append(weight)
        value.append(float(rng.random()))
        is_leaf = depth >= max_depth or rng.random() < 0.25
        if not is_leaf:
            frac = float(rng.uniform(0.15, 0.85))
            feature[slot] = int(rng.integers(n_features))
            threshold[slot] = float(rng.uniform(-1.0, 1.0))
            children_left[slot] = add_node(weight * frac, depth + 1)
            children_right[slot] = add_node(weight * (1.0 - frac), depth + 1)
        return slot

    add_node(float(rng.uniform(10.0, 100.0)), 0)
    return Tree(
        children_left=np.asarray(children_left, dtype=np.int64),
        children_right=np.asarray(children_right, dtype=np.int64),
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        node_weight=np.asarray(node_weight, dtype=np.float64),
        value=np.asarray(value, dtype=np.float64),
        n_features=n_features,
        max_depth_reached=max_depth,
    )
