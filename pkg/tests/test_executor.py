# tests/test_executor.py
import math
import os
import sys

import numpy as np
import pytest
import torch

# Ajouter le répertoire parent au path
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from src.core.errors import CacheMissingError, MissingParameterError, ShapeMismatchError
from src.core.executor import backward_pass, bypassed_nodes, execute, execute_reference, plan_schedule
from src.core.graph import apply_prune, build_mixing_console
from src.core.losses import Phase
from src.core.models import FULL_CHAIN, Graph, Node, NodeType, PruneMask, SubgroupSpec, parse_chain
from src.core.params import ParamStore, init_params

SR = 8000
FD_STEPS = (1e-3, 1e-4, 1e-5)


def chain_graph(*types):
    nodes = [Node(0, NodeType.INPUT, 0)]
    for k, node_type in enumerate(types, start=1):
        nodes.append(Node(k, node_type))
    nodes.append(Node(len(nodes), NodeType.OUTPUT))
    return Graph(tuple(nodes), tuple((k, k + 1) for k in range(len(nodes) - 1)))


@pytest.fixture
def uneven_graph():
    """
    5 pistes : t1 e-n-g, t2 n-g, t3 n-g, t4 g, t5 g ; t1..t3 -> m1, t4..t5 -> m2 ;
    m1 -> e-c-g -> o, m2 -> o. 15 noeuds hors entrees.
    """
    nodes, edges = [], []

    def add(node_type, source=None):
        nodes.append(Node(len(nodes), node_type, source))
        return len(nodes) - 1

    def chain(head, letters):
        for letter in letters:
            node = add(NodeType.from_tag(letter))
            edges.append((head, node))
            head = node
        return head

    tails = []
    for k, letters in enumerate(["eng", "ng", "ng", "g", "g"]):
        tails.append(chain(add(NodeType.INPUT, k), letters))
    m1, m2 = add(NodeType.MIX), add(NodeType.MIX)
    edges += [(tails[0], m1), (tails[1], m1), (tails[2], m1), (tails[3], m2), (tails[4], m2)]
    bus = chain(m1, "ecg")
    out = add(NodeType.OUTPUT)
    edges += [(bus, out), (m2, out)]
    return Graph(tuple(nodes), tuple(edges))


def random_store(graph, seed=0):
    """Parametres perturbes autour de l'initialisation, logits aleatoires."""
    rng = np.random.default_rng(seed)
    store = ParamStore.for_graph(graph, SR, seed=seed, dtype=torch.float64)
    for node in graph.processors():
        values = init_params(node.node_type, SR)
        store.set_node_params(node.id, {k: v + 0.2 * rng.standard_normal(v.shape) for k, v in values.items()})
        store.set_logit(node.id, float(rng.normal()))
    return store


def sources_for(graph, n=2000, seed=1):
    count = len(graph.nodes_of_type(NodeType.INPUT))
    generator = torch.Generator().manual_seed(seed)
    return 0.1 * torch.randn(count, 2, n, generator=generator, dtype=torch.float64)


def random_console(rng):
    """Console aleatoire : K <= 8 pistes, groupes et chaine tires au hasard."""
    track_count = int(rng.integers(1, 9))
    labels = [int(rng.integers(0, track_count)) for _ in range(track_count)]
    chain = [t for t in FULL_CHAIN if rng.random() < 0.6] or [NodeType.GAIN_PAN]
    return build_mixing_console(track_count, SubgroupSpec.from_labels(labels), chain)


class TestPlanSchedule:
    def test_uneven_graph(self, uneven_graph):
        """15 evaluations noeud par noeud, 8 etages batches."""
        plan = plan_schedule(uneven_graph)
        assert len(uneven_graph.nodes) - 5 == 15
        assert plan.processing_stage_count == 8

    def test_single_chain(self):
        """i -> e -> c -> o : 4 etages."""
        plan = plan_schedule(chain_graph(NodeType.EQUALIZER, NodeType.COMPRESSOR))
        assert len(plan) == 4

    @pytest.mark.parametrize("track_count", [1, 3, 6])
    def test_parallel_chains_independent_of_k(self, track_count):
        """K chaines completes, un groupe : 17 etages quel que soit K."""
        graph = build_mixing_console(track_count, SubgroupSpec.single(track_count))
        assert len(plan_schedule(graph)) == 17

    def test_stages_type_homogeneous(self, console):
        plan = plan_schedule(console)
        for stage in plan.stages:
            assert {console.get(i).node_type for i in stage.node_ids} == {stage.node_type}

    def test_covers_every_node_once(self, console):
        order = plan_schedule(console).node_order()
        assert sorted(order) == console.node_ids

    def test_dependencies_respected(self, uneven_graph):
        order = plan_schedule(uneven_graph).node_order()
        position = {node_id: k for k, node_id in enumerate(order)}
        for src, dst in uneven_graph.edges:
            assert position[src] < position[dst]


class TestExecute:
    def test_batched_matches_reference(self, console):
        store = random_store(console)
        sources = sources_for(console)
        with torch.no_grad():
            batched = execute(console, store, sources).mix
            reference = execute_reference(console, store, sources).mix
        assert torch.allclose(batched, reference, atol=1e-10)

    def test_all_bypassed_is_dry_sum(self, console):
        """Tous les w a 0 : mix = somme des pistes, exactement."""
        store = random_store(console)
        for node_id in store.node_ids:
            store.set_logit(node_id, float("-inf"))
        sources = sources_for(console)
        expected = sources[0] + sources[1]
        with torch.no_grad():
            assert torch.equal(execute_reference(console, store, sources).mix, expected)
            assert torch.equal(execute(console, store, sources).mix, expected)

    def test_mask_bypasses_nodes(self, console):
        """Un masque nul sur tous les processeurs equivaut a w = 0."""
        store = random_store(console)
        sources = sources_for(console)
        mask = PruneMask.removing(store.node_ids)
        with torch.no_grad():
            out = execute_reference(console, store, sources, mask=mask).mix
        assert torch.equal(out, sources[0] + sources[1])

    def test_single_gain_doubles(self):
        """Une piste, un gain w=1, gL=gR=ln 2 : mix = 2 x piste."""
        graph = chain_graph(NodeType.GAIN_PAN)
        store = ParamStore.for_graph(graph, SR, dtype=torch.float64)
        store.set_node_params(1, {"log_gain": [math.log(2), math.log(2)]})
        store.set_logit(1, float("inf"))
        sources = sources_for(graph)
        with torch.no_grad():
            mix = execute(graph, store, sources).mix
        assert torch.allclose(mix, 2 * sources[0])

    def test_intermediates(self, console, store):
        sources = sources_for(console)
        with torch.no_grad():
            render = execute(console, store, sources, keep_intermediates=True)
        assert set(render.node_outputs) == set(console.node_ids)
        assert set(render.stage_norms) == {n.id for n in console.processors()}
        assert render.mix.shape == (2, sources.shape[-1])

    def test_missing_parameters(self, console):
        other = build_mixing_console(1, SubgroupSpec.single(1))
        store = ParamStore.for_graph(other, SR, dtype=torch.float64)
        with pytest.raises(MissingParameterError):
            execute(console, store, sources_for(console))

    def test_wrong_source_count(self, console, store):
        with pytest.raises(ShapeMismatchError):
            execute(console, store, sources_for(chain_graph(NodeType.GAIN_PAN)))


class TestBackwardPass:
    def test_requires_recorded_render(self, console, store):
        with torch.no_grad():
            mix = execute(console, store, sources_for(console)).mix
        with pytest.raises(CacheMissingError):
            backward_pass(mix.sum(), store)

    def test_logit_gradients_match_finite_differences(self):
        """Gradients des logits d'une petite console contre differences finies."""
        graph = build_mixing_console(1, SubgroupSpec.single(1), parse_chain("esg"))
        store = random_store(graph, seed=4)
        sources = sources_for(graph, n=1500)
        projection = torch.randn(2, 1500, generator=torch.Generator().manual_seed(9), dtype=torch.float64)

        def loss():
            return (execute(graph, store, sources).mix * projection).sum()

        grads = backward_pass(loss(), store)
        step = 1e-5
        for node in graph.processors():
            base = store.logit(node.id)
            values = []
            for sign in (1, -1):
                store.set_logit(node.id, base + sign * step)
                with torch.no_grad():
                    values.append(float(loss()))
            store.set_logit(node.id, base)
            numeric = (values[0] - values[1]) / (2 * step)
            analytic = float(grads.node(node.id)["logit"])
            assert analytic == pytest.approx(numeric, rel=1e-4, abs=1e-8)

    def test_unused_parameters_get_zero(self):
        """Un noeud bypasse recoit des gradients de parametres nuls."""
        graph = chain_graph(NodeType.EQUALIZER, NodeType.GAIN_PAN)
        store = random_store(graph)
        store.set_logit(1, float("-inf"))
        mix = execute(graph, store, sources_for(graph)).mix
        grads = backward_pass(mix.pow(2).sum(), store)
        assert torch.count_nonzero(grads.node(1)["log_magnitude"]) == 0
        assert torch.count_nonzero(grads.node(2)["log_gain"]) > 0

    @pytest.mark.slow
    def test_total_loss_gradients_full_console(self, console, trainer):
        """Console complete K=2 : chaque tenseur de parametres contre differences finies de la loss totale."""
        store = random_store(console, seed=7)
        segment = trainer.sample_segment(np.random.default_rng(0))

        def total():
            render = execute(console, store, segment.sources)
            return trainer.compute_loss(
                console, store, render, segment.target, Phase.PRUNE, 4000, segment.loss_start
            ).total

        leaves = store.parameters()
        analytic = torch.autograd.grad(total(), leaves)
        rng = np.random.default_rng(1)
        failures = []
        for position, (leaf, grad) in enumerate(zip(leaves, analytic)):
            flat = leaf.data.view(-1)
            for index in rng.choice(flat.numel(), size=min(2, flat.numel()), replace=False):
                expected = float(grad.reshape(-1)[index])
                original = float(flat[index])
                best = None
                for step in FD_STEPS:
                    values = []
                    for sign in (1.0, -1.0):
                        flat[index] = original + sign * step
                        with torch.no_grad():
                            values.append(float(total()))
                    flat[index] = original
                    numeric = (values[0] - values[1]) / (2 * step)
                    if best is None or abs(numeric - expected) < abs(best - expected):
                        best = numeric
                if abs(best - expected) > 1e-6 + 1e-3 * abs(expected):
                    failures.append((position, int(index), expected, best))
        assert failures == []


class TestBypassExactness:
    @pytest.mark.parametrize("seed", range(5))
    def test_masked_console_equals_pruned_graph(self, seed):
        """Masque a 0 sur la moitie des processeurs : rendu identique au bit pres au graphe elague."""
        console = build_mixing_console(3, SubgroupSpec(((0, 1), (2,))))
        store = random_store(console, seed=seed)
        rng = np.random.default_rng(seed)
        mask = PruneMask.removing([n.id for n in console.processors() if rng.random() < 0.5])
        pruned = apply_prune(console, mask)
        restricted = store.restricted_to(pruned)
        sources = sources_for(console, n=1500, seed=seed)
        with torch.no_grad():
            masked = execute(console, store, sources, mask=mask).mix
            removed = execute(pruned, restricted, sources).mix
            masked_reference = execute_reference(console, store, sources, mask=mask).mix
            removed_reference = execute_reference(pruned, restricted, sources).mix
        assert torch.equal(masked, removed)
        assert torch.equal(masked_reference, removed_reference)

    def test_zero_weight_equals_removal(self):
        """w = 0 par logit -inf, sans masque : meme rendu que la suppression."""
        console = build_mixing_console(3, SubgroupSpec(((0, 1), (2,))))
        store = random_store(console, seed=11)
        silenced = [n.id for n in console.processors()][::3]
        for node_id in silenced:
            store.set_logit(node_id, float("-inf"))
        assert bypassed_nodes(console, store) == silenced
        pruned = apply_prune(console, PruneMask.removing(silenced))
        sources = sources_for(console, n=1500)
        with torch.no_grad():
            zeroed = execute(console, store, sources).mix
            removed = execute(pruned, store.restricted_to(pruned), sources).mix
        assert torch.equal(zeroed, removed)

    def test_bypassed_nodes_combines_mask_and_weights(self, console, store):
        first, second = [n.id for n in console.processors()][:2]
        store.set_logit(second, float("-inf"))
        assert bypassed_nodes(console, store, PruneMask.removing([first])) == [first, second]
        assert bypassed_nodes(console, store) == [second]


class TestRandomConsoles:
    def test_repeated_runs_bit_identical(self, console):
        store = random_store(console, seed=3)
        sources = sources_for(console)
        with torch.no_grad():
            first = execute(console, store, sources).mix
            second = execute(console, store, sources).mix
        assert torch.equal(first, second)

    @pytest.mark.slow
    def test_batched_matches_reference_on_100_consoles(self):
        """100 consoles aleatoires (K <= 8) : ecart relatif max <= 1e-6."""
        rng = np.random.default_rng(2024)
        for case in range(100):
            console = random_console(rng)
            store = random_store(console, seed=case)
            sources = sources_for(console, n=800, seed=case)
            with torch.no_grad():
                batched = execute(console, store, sources).mix
                reference = execute_reference(console, store, sources).mix
            scale = max(float(reference.abs().max()), 1e-12)
            assert float((batched - reference).abs().max()) <= 1e-6 * scale, case
