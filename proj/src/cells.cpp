#include "morphnas/cells.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace morphnas {

std::string cell_kind_name(CellKind k) {
    switch (k) {
        case CellKind::Normal: return "normal";
        case CellKind::Reduction: return "reduction";
        case CellKind::DownSC: return "downsc";
        case CellKind::UpSC: return "upsc";
    }
    return "normal";
}

CellKind cell_kind_from_name(const std::string& s) {
    if (s == "normal") return CellKind::Normal;
    if (s == "reduction") return CellKind::Reduction;
    if (s == "downsc") return CellKind::DownSC;
    if (s == "upsc") return CellKind::UpSC;
    throw std::invalid_argument("unknown cell kind '" + s + "'");
}

int SearchSpace::op_index(const std::string& op) const {
    for (std::size_t i = 0; i < ops.size(); ++i)
        if (ops[i] == op) return static_cast<int>(i);
    return -1;
}

const std::vector<SearchSpace>& SearchSpace::all() {
    // Op order in the cls spaces matches the adjacency-matrix numbering
    // (1..6 = sep3, sep5, avg, max, identity, pseudo op).
    static const std::vector<SearchSpace> spaces = {
        {"cls-plain",
         {"sep_conv_3x3", "sep_conv_5x5", "avg_pool", "max_pool", "identity"}},
        {"cls-dilation",
         {"sep_conv_3x3", "sep_conv_5x5", "avg_pool", "max_pool", "identity", "pseudo_dilation_3x3"}},
        {"cls-erosion",
         {"sep_conv_3x3", "sep_conv_5x5", "avg_pool", "max_pool", "identity", "pseudo_erosion_3x3"}},
        {"edge-plain",
         {"cweight_3x3", "sep_conv_3x3", "conv_3x3", "avg_pool", "max_pool", "sep_conv_5x5"}},
        {"edge-dilation",
         {"cweight_3x3", "sep_conv_3x3", "conv_3x3", "avg_pool", "max_pool", "pseudo_dilation_3x3"}},
        {"edge-gradient",
         {"cweight_3x3", "sep_conv_3x3", "conv_3x3", "avg_pool", "max_pool", "pseudo_gradient_3x3"}},
        {"upsc",
         {"sep_conv_3x3", "sep_conv_5x5", "avg_pool", "max_pool", "pseudo_gradient_3x3",
          "transpose_conv"}},
    };
    return spaces;
}

const SearchSpace& SearchSpace::by_name(const std::string& name) {
    for (const auto& s : all())
        if (s.name == name) return s;
    throw std::invalid_argument("unknown search space '" + name + "'");
}

void CellGraph::validate() const {
    const SearchSpace& sp = SearchSpace::by_name(space);
    if (b < 0 || static_cast<int>(nodes.size()) != b)
        throw std::invalid_argument("cell: node count does not match B");
    for (int i = 0; i < b; ++i) {
        const Node& n = nodes[i];
        if (n.pred1 < 0 || n.pred1 >= i + 2 || n.pred2 < 0 || n.pred2 >= i + 2)
            throw std::invalid_argument("cell: node " + std::to_string(i) +
                                        " predecessor out of range");
        if (n.op1 < 0 || n.op1 >= static_cast<int>(sp.ops.size()) || n.op2 < 0 ||
            n.op2 >= static_cast<int>(sp.ops.size()))
            throw std::invalid_argument("cell: node " + std::to_string(i) + " op out of range");
    }
}

std::vector<int> CellGraph::loose_end_nodes() const {
    std::vector<bool> used(b, false);
    for (const auto& n : nodes) {
        if (n.pred1 >= 2) used[n.pred1 - 2] = true;
        if (n.pred2 >= 2) used[n.pred2 - 2] = true;
    }
    std::vector<int> loose;
    for (int i = 0; i < b; ++i)
        if (!used[i]) loose.push_back(i);
    return loose;
}

int token_alphabet_size(const SearchSpace& space, int b) {
    return b + 1 + static_cast<int>(space.ops.size());
}

TokenSeq encode_cell(const CellGraph& cell) {
    cell.validate();
    TokenSeq out;
    out.reserve(4 * cell.b);
    const int op_base = cell.b + 1;
    for (const auto& n : cell.nodes) {
        out.push_back(n.pred1);
        out.push_back(op_base + n.op1);
        out.push_back(n.pred2);
        out.push_back(op_base + n.op2);
    }
    return out;
}

CellGraph decode_cell(const TokenSeq& tokens, const SearchSpace& space, int b, CellKind kind) {
    if (static_cast<int>(tokens.size()) != 4 * b)
        throw std::invalid_argument("decode_cell: expected " + std::to_string(4 * b) + " tokens, got " +
                                    std::to_string(tokens.size()));
    const int op_base = b + 1;
    const int alphabet = token_alphabet_size(space, b);
    CellGraph cell;
    cell.b = b;
    cell.kind = kind;
    cell.space = space.name;
    for (int i = 0; i < b; ++i) {
        CellGraph::Node n;
        const int p1 = tokens[4 * i], o1 = tokens[4 * i + 1];
        const int p2 = tokens[4 * i + 2], o2 = tokens[4 * i + 3];
        for (int t : {p1, o1, p2, o2})
            if (t < 0 || t >= alphabet)
                throw std::invalid_argument("decode_cell: token " + std::to_string(t) +
                                            " outside alphabet of size " + std::to_string(alphabet));
        if (p1 >= i + 2 || p2 >= i + 2)
            throw std::invalid_argument("decode_cell: predecessor token out of range for node " +
                                        std::to_string(i));
        if (o1 < op_base || o2 < op_base)
            throw std::invalid_argument("decode_cell: expected op token for node " + std::to_string(i));
        n.pred1 = p1;
        n.op1 = o1 - op_base;
        n.pred2 = p2;
        n.op2 = o2 - op_base;
        cell.nodes.push_back(n);
    }
    cell.validate();
    return cell;
}

std::vector<std::vector<int>> adjacency_matrix(const CellGraph& cell) {
    cell.validate();
    const int size = cell.b + 3;  // 2 inputs + B nodes + output
    std::vector<std::vector<int>> m(size, std::vector<int>(size, 0));
    for (int i = 0; i < cell.b; ++i) {
        const auto& n = cell.nodes[i];
        const int v = i + 2;
        if (m[n.pred1][v] == 0) m[n.pred1][v] = 1 + n.op1;
        if (m[n.pred2][v] == 0) m[n.pred2][v] = 1 + n.op2;
    }
    const int out_col = size - 1;
    if (cell.b == 0) {
        m[0][out_col] = 7;
        m[1][out_col] = 7;
    } else {
        for (int loose : cell.loose_end_nodes()) m[loose + 2][out_col] = 7;
    }
    return m;
}

CellGraph random_cell(const SearchSpace& space, int b, CellKind kind, std::mt19937& rng) {
    if (b < 1) throw std::invalid_argument("random_cell: B must be >= 1");
    CellGraph cell;
    cell.b = b;
    cell.kind = kind;
    cell.space = space.name;
    std::uniform_int_distribution<int> op_pick(0, static_cast<int>(space.ops.size()) - 1);
    for (int i = 0; i < b; ++i) {
        std::uniform_int_distribution<int> pred_pick(0, i + 1);
        CellGraph::Node n;
        n.pred1 = pred_pick(rng);
        n.op1 = op_pick(rng);
        n.pred2 = pred_pick(rng);
        n.op2 = op_pick(rng);
        cell.nodes.push_back(n);
    }
    return cell;
}

std::string cell_to_text(const CellGraph& cell) {
    cell.validate();
    const SearchSpace& sp = SearchSpace::by_name(cell.space);
    std::ostringstream os;
    os << "B=" << cell.b << ";";
    for (int i = 0; i < cell.b; ++i) {
        const auto& n = cell.nodes[i];
        os << " node" << i << "=(" << n.pred1 << "," << sp.ops[n.op1] << "," << n.pred2 << ","
           << sp.ops[n.op2] << ");";
    }
    os << " kind=" << cell_kind_name(cell.kind) << "; space=" << cell.space;
    return os.str();
}

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

CellGraph cell_from_text(const std::string& line) {
    std::vector<std::pair<std::string, std::string>> fields;
    std::stringstream ss(line);
    std::string part;
    while (std::getline(ss, part, ';')) {
        part = trim(part);
        if (part.empty()) continue;
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("cell text: missing '=' in '" + part + "'");
        fields.emplace_back(trim(part.substr(0, eq)), trim(part.substr(eq + 1)));
    }
    CellGraph cell;
    std::string space_name, kind_name;
    std::vector<std::pair<int, std::string>> node_texts;
    for (const auto& [key, value] : fields) {
        if (key == "B") {
            cell.b = std::stoi(value);
        } else if (key == "kind") {
            kind_name = value;
        } else if (key == "space") {
            space_name = value;
        } else if (key.rfind("node", 0) == 0) {
            node_texts.emplace_back(std::stoi(key.substr(4)), value);
        } else {
            throw std::invalid_argument("cell text: unknown field '" + key + "'");
        }
    }
    if (space_name.empty() || kind_name.empty())
        throw std::invalid_argument("cell text: missing kind/space");
    const SearchSpace& sp = SearchSpace::by_name(space_name);
    cell.space = space_name;
    cell.kind = cell_kind_from_name(kind_name);
    std::sort(node_texts.begin(), node_texts.end());
    for (std::size_t i = 0; i < node_texts.size(); ++i) {
        if (node_texts[i].first != static_cast<int>(i))
            throw std::invalid_argument("cell text: node indices must be 0..B-1");
        std::string v = node_texts[i].second;
        if (v.size() < 2 || v.front() != '(' || v.back() != ')')
            throw std::invalid_argument("cell text: node value must be parenthesized");
        v = v.substr(1, v.size() - 2);
        std::vector<std::string> toks;
        std::stringstream vs(v);
        std::string tok;
        while (std::getline(vs, tok, ',')) toks.push_back(trim(tok));
        if (toks.size() != 4) throw std::invalid_argument("cell text: node needs (p1,op1,p2,op2)");
        CellGraph::Node n;
        n.pred1 = std::stoi(toks[0]);
        n.pred2 = std::stoi(toks[2]);
        n.op1 = sp.op_index(toks[1]);
        n.op2 = sp.op_index(toks[3]);
        if (n.op1 < 0 || n.op2 < 0)
            throw std::invalid_argument("cell text: op not in space '" + space_name + "'");
        cell.nodes.push_back(n);
    }
    if (static_cast<int>(cell.nodes.size()) != cell.b)
        throw std::invalid_argument("cell text: node count does not match B");
    cell.validate();
    return cell;
}

}  // namespace morphnas
