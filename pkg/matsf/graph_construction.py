"""constructing a networkx.DiGraph object from a differentiation graph"""
from __future__ import annotations
from collections import Counter
from typing import Dict, Union
import networkx as nx
import pandas as pd
from .tensor_core import TensorNode, topological_order


class ConstructGraph:

    def __init__(self, root: TensorNode):
        self.root = root
        self.nodes = topological_order(root)

    def op_graph(self, return_type: str='graph'
        ) -> Union[nx.DiGraph, pd.DataFrame]:
        """returns a graph whose edges point from an op's input to its output
        :param return_type: takes 'graph', 'adj_list', 'adj_mt'
        """
        index = {id(n): k for k, n in enumerate(self.nodes)}
        adj_list = [(index[id(p)], 'feeds', index[id(n)])
            for n in self.nodes for p in n._parents]
        pd_adj_ls = pd.DataFrame(adj_list,
            columns=['head', 'relation_name', 'tail'])
        if return_type in ['adj_list']:
            return pd_adj_ls
        elif return_type in ['graph', 'adj_mt']:
            G = nx.DiGraph()
            for k, n in enumerate(self.nodes):
                G.add_node(k, op=n.op or 'leaf', shape=n.shape,
                    name=n.name, requires_grad=n.requires_grad)
            G.add_edges_from((h, t, dict(relation_name=r))
                for h, r, t in adj_list)
            if return_type == 'graph':
                return G
            return nx.to_pandas_adjacency(G)
        else:
            raise NotImplementedError

    @classmethod
    def build_graph(cls, root: TensorNode) -> nx.DiGraph:
        return cls(root).op_graph(return_type='graph')


def graph_summary(root: TensorNode) -> Dict:
    """node/edge counts, op histogram, parameter leaves and acyclicity"""
    G = ConstructGraph.build_graph(root)
    ops = Counter(d['op'] for _, d in G.nodes(data=True))
    return dict(
        nodes=G.number_of_nodes(),
        edges=G.number_of_edges(),
        acyclic=nx.is_directed_acyclic_graph(G),
        parameters=sum(1 for _, d in G.nodes(data=True)
            if d['op'] == 'leaf' and d['requires_grad']),
        ops=dict(sorted(ops.items())),
        )
