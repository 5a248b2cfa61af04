#include "morphnas/search.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <sstream>
#include <thread>

namespace morphnas {

namespace {

unsigned mix_seed(unsigned seed, unsigned iter, unsigned idx) {
    unsigned h = seed;
    h = h * 2654435761u + iter + 0x9e3779b9u;
    h = h * 2654435761u + idx + 0x7f4a7c15u;
    return h;
}

std::vector<CellGraph> random_arch(const SeqSchema& schema, std::mt19937& rng) {
    std::vector<CellGraph> cells;
    for (const auto& slot : schema.slots)
        cells.push_back(random_cell(SearchSpace::by_name(slot.space), schema.b, slot.kind, rng));
    return cells;
}

}  // namespace

SearchResult search_loop(const SearchTask& task, const SearchBudget& budget) {
    if (budget.iterations < 1 || budget.candidates_per_iter < 1)
        throw std::invalid_argument("search_loop: budget must be positive");
    if (!task.evaluate) throw std::invalid_argument("search_loop: missing evaluator");

    std::mt19937 rng(budget.seed);
    SearchResult res;
    std::vector<ArchRecord> records;
    std::vector<std::vector<CellGraph>> record_cells;
    std::set<TokenSeq> seen;

    std::vector<std::vector<CellGraph>> candidates;
    for (int i = 0; i < budget.candidates_per_iter; ++i) {
        auto arch = random_arch(task.schema, rng);
        seen.insert(task.schema.encode(arch));
        candidates.push_back(std::move(arch));
    }

    for (int iter = 0; iter < budget.iterations; ++iter) {
        // Evaluate this round's candidates (optionally in parallel); each
        // candidate gets a deterministic seed, so scheduling cannot change
        // the results.
        std::vector<double> scores(candidates.size(), 0.0);
        const int jobs = std::max(1, budget.jobs);
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= candidates.size()) break;
                try {
                    scores[i] = task.evaluate(candidates[i],
                                              mix_seed(budget.seed, static_cast<unsigned>(iter),
                                                       static_cast<unsigned>(i)));
                } catch (const std::exception&) {
                    scores[i] = 0.0;  // diverged candidate
                }
            }
        };
        if (jobs == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }

        for (std::size_t i = 0; i < candidates.size(); ++i) {
            ArchRecord rec;
            rec.x = task.schema.encode(candidates[i]);
            rec.score = scores[i];
            records.push_back(rec);
            record_cells.push_back(candidates[i]);
            res.history.push_back({iter, scores[i], candidates[i]});
            if (res.best.empty() || scores[i] > res.best_score) {
                res.best_score = scores[i];
                res.best = candidates[i];
            }
            res.best_so_far.push_back(res.best_score);
        }
        if (iter + 1 == budget.iterations) break;

        // Fit the surrogate on min-max normalized scores.
        double lo = records.front().score, hi = records.front().score;
        for (const auto& r : records) {
            lo = std::min(lo, r.score);
            hi = std::max(hi, r.score);
        }
        std::vector<ArchRecord> normalized = records;
        for (auto& r : normalized) r.score = hi > lo ? (r.score - lo) / (hi - lo) : 0.5;

        NaoConfig nao_cfg = budget.nao;
        nao_cfg.seed = mix_seed(budget.seed, static_cast<unsigned>(iter), 0xabcdefu);
        NaoModel model(task.schema, nao_cfg);
        model.train(normalized);

        // Ascend from the best architectures seen so far.
        std::vector<ArchRecord> seeds = normalized;
        std::sort(seeds.begin(), seeds.end(),
                  [](const ArchRecord& a, const ArchRecord& b) { return a.score > b.score; });
        if (static_cast<int>(seeds.size()) > budget.candidates_per_iter)
            seeds.resize(static_cast<std::size_t>(budget.candidates_per_iter));
        auto generated =
            generate_candidates(model, seeds, nao_cfg.eta, nao_cfg.steps, budget.candidates_per_iter);
        res.invalid_decodes += generated.discarded;
        res.surrogate_improved += generated.improved;
        res.surrogate_seeds += generated.seeds;

        candidates.clear();
        for (const auto& seq : generated.sequences) {
            if (seen.count(seq)) continue;
            seen.insert(seq);
            candidates.push_back(task.schema.decode(seq));
        }
        // Top up with fresh random cells so every iteration evaluates a full
        // round even when the surrogate collapses onto known sequences.
        int attempts = 0;
        while (static_cast<int>(candidates.size()) < budget.candidates_per_iter) {
            auto arch = random_arch(task.schema, rng);
            const TokenSeq key = task.schema.encode(arch);
            if (seen.count(key) && ++attempts < 1000) continue;  // tiny spaces may exhaust
            seen.insert(key);
            candidates.push_back(std::move(arch));
        }
    }
    return res;
}

std::string history_line(const SearchHistoryEntry& e) {
    std::ostringstream os;
    for (std::size_t i = 0; i < e.cells.size(); ++i) {
        if (i) os << " & ";
        os << cell_to_text(e.cells[i]);
    }
    os << "\t" << e.score << "\t" << e.iteration;
    return os.str();
}

SearchHistoryEntry history_line_parse(const std::string& line) {
    const auto tab1 = line.rfind('\t');
    if (tab1 == std::string::npos) throw std::invalid_argument("history line: missing fields");
    const auto tab0 = line.rfind('\t', tab1 - 1);
    if (tab0 == std::string::npos) throw std::invalid_argument("history line: missing fields");
    SearchHistoryEntry e;
    e.iteration = std::stoi(line.substr(tab1 + 1));
    e.score = std::stod(line.substr(tab0 + 1, tab1 - tab0 - 1));
    std::string cells = line.substr(0, tab0);
    std::size_t pos = 0;
    while (true) {
        const auto amp = cells.find(" & ", pos);
        if (amp == std::string::npos) {
            e.cells.push_back(cell_from_text(cells.substr(pos)));
            break;
        }
        e.cells.push_back(cell_from_text(cells.substr(pos, amp - pos)));
        pos = amp + 3;
    }
    return e;
}

}  // namespace morphnas
