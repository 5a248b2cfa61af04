// NAO-style architecture search: evaluate candidates at proxy scale, fit the
// surrogate, ascend in latent space, decode new candidates, repeat.
#pragma once

#include <functional>

#include "morphnas/nao.hpp"

namespace morphnas {

struct SearchTask {
    SeqSchema schema;  // one or two cell slots
    // Returns a score in [0,1] for the candidate; the seed makes proxy
    // training reproducible. Exceptions are recorded as score 0.
    std::function<double(const std::vector<CellGraph>&, unsigned)> evaluate;
};

struct SearchBudget {
    int iterations = 2;
    int candidates_per_iter = 8;
    unsigned seed = 0;
    int jobs = 1;  // parallel candidate evaluations
    NaoConfig nao;
};

struct SearchHistoryEntry {
    int iteration = 0;
    double score = 0.0;
    std::vector<CellGraph> cells;
};

struct SearchResult {
    std::vector<CellGraph> best;
    double best_score = 0.0;
    std::vector<SearchHistoryEntry> history;  // evaluation order
    std::vector<double> best_so_far;          // parallel to history, nondecreasing
    int invalid_decodes = 0;
    int surrogate_improved = 0;  // ascent steps that improved the predictor score
    int surrogate_seeds = 0;
};

SearchResult search_loop(const SearchTask& task, const SearchBudget& budget);

// History line: "<cell-text>[ & <cell-text>]\t<score>\t<iteration>".
std::string history_line(const SearchHistoryEntry& e);
SearchHistoryEntry history_line_parse(const std::string& line);

}  // namespace morphnas
