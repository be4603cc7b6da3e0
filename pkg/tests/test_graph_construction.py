import networkx as nx
import numpy as np
from matsf import tensor_core as tc
from matsf.graph_construction import ConstructGraph, graph_summary
from matsf.models import init_model


def _loss():
    w = tc.parameter(np.ones((2, 3)), name='w')
    b = tc.parameter(np.zeros(2), name='b')
    x = tc.constant(np.ones((4, 3)))
    h = tc.sigmoid(tc.add(tc.matmul(x, tc.transpose(w)), b))
    return tc.mean(tc.mul(h, h))


def test_graph_is_acyclic_and_rooted():
    G = ConstructGraph.build_graph(_loss())
    assert isinstance(G, nx.DiGraph)
    assert nx.is_directed_acyclic_graph(G)
    sinks = [n for n in G.nodes if G.out_degree(n) == 0]
    assert len(sinks) == 1
    assert G.nodes[sinks[0]]['op'] == 'mean'


def test_adjacency_list_edges_feed_forward():
    adj = ConstructGraph(_loss()).op_graph(return_type='adj_list')
    assert list(adj.columns) == ['head', 'relation_name', 'tail']
    assert (adj['relation_name'] == 'feeds').all()
    assert (adj['head'] < adj['tail']).all()


def test_summary_counts_parameters():
    summary = graph_summary(_loss())
    assert summary['acyclic']
    assert summary['parameters'] == 2
    assert summary['ops']['matmul'] == 1
    # h feeds mul twice but is one node
    assert summary['ops']['sigmoid'] == 1


def test_forecaster_graph_reaches_every_parameter():
    model = init_model(dict(kind='forecaster', input_size=2, hidden_sizes=[3, 2]), seed=0)
    out = model.forward(np.zeros((1, 4, 2)))
    summary = graph_summary(tc.sum(out))
    assert summary['parameters'] == len(model.parameters())
    assert summary['acyclic']
