// Cell DAGs, search-space vocabularies, token/adjacency encodings, and the
// line-based text serialization used by search logs and golden files.
#pragma once

#include <random>
#include <string>
#include <vector>

namespace morphnas {

enum class CellKind { Normal, Reduction, DownSC, UpSC };

std::string cell_kind_name(CellKind k);
CellKind cell_kind_from_name(const std::string& s);

// Named operation vocabulary. All op identifiers are symbolic strings; the
// network builder maps them to layers.
struct SearchSpace {
    std::string name;
    std::vector<std::string> ops;

    int op_index(const std::string& op) const;  // -1 if absent

    static const SearchSpace& by_name(const std::string& name);
    static const std::vector<SearchSpace>& all();
};

// DAG of B intermediate nodes; two cell inputs occupy predecessor slots 0
// and 1, intermediate node i occupies slot i + 2. Each node combines two
// predecessor outputs (through one op each) by addition; the cell output
// concatenates every loose-end intermediate node.
struct CellGraph {
    struct Node {
        int pred1 = 0;
        int op1 = 0;  // index into the space's op list
        int pred2 = 0;
        int op2 = 0;
    };

    int b = 0;
    std::vector<Node> nodes;
    CellKind kind = CellKind::Normal;
    std::string space;  // search-space name

    void validate() const;  // pred ranges, op ranges, node count
    std::vector<int> loose_end_nodes() const;  // intermediate indices (0-based) never consumed

    bool operator==(const CellGraph& o) const {
        if (b != o.b || kind != o.kind || space != o.space || nodes.size() != o.nodes.size())
            return false;
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].pred1 != o.nodes[i].pred1 || nodes[i].op1 != o.nodes[i].op1 ||
                nodes[i].pred2 != o.nodes[i].pred2 || nodes[i].op2 != o.nodes[i].op2)
                return false;
        return true;
    }
};

// Token encoding: per node (pred1, op1, pred2, op2); predecessor symbols are
// 0..B, op symbols are (B+1)..(B+|ops|). Alphabet size = B+1+|ops|.
using TokenSeq = std::vector<int>;

int token_alphabet_size(const SearchSpace& space, int b);
TokenSeq encode_cell(const CellGraph& cell);
CellGraph decode_cell(const TokenSeq& tokens, const SearchSpace& space, int b, CellKind kind);

// Square matrix over {0..7}: rows/cols are [input0, input1, node0.., output];
// entry (u,v) = 1 + op index for the edge u->v (first edge wins for parallel
// edges), 7 marks concatenation into the output, 0 = no edge.
std::vector<std::vector<int>> adjacency_matrix(const CellGraph& cell);

CellGraph random_cell(const SearchSpace& space, int b, CellKind kind, std::mt19937& rng);

// "B=<n>; node<i>=(p1,op1,p2,op2); kind=<k>; space=<name>" with symbolic op names.
std::string cell_to_text(const CellGraph& cell);
CellGraph cell_from_text(const std::string& line);

}  // namespace morphnas
