#include <doctest.h>

#include <set>
#include "morphnas/nao.hpp"

using namespace morphnas;

namespace {

SeqSchema small_schema(int b = 3) {
    SeqSchema s;
    s.b = b;
    s.slots = {{"cls-dilation", CellKind::Normal}};
    return s;
}

std::vector<ArchRecord> diversity_corpus(const SeqSchema& schema, int n, unsigned seed) {
    // synthetic deterministic score: distinct ops used / |ops|
    std::mt19937 rng(seed);
    const auto& space = SearchSpace::by_name(schema.slots[0].space);
    std::vector<ArchRecord> corpus;
    std::set<TokenSeq> seen;
    while (static_cast<int>(corpus.size()) < n) {
        const auto cell = random_cell(space, schema.b, CellKind::Normal, rng);
        ArchRecord rec;
        rec.x = schema.encode({cell});
        if (!seen.insert(rec.x).second) continue;
        std::set<int> ops;
        for (const auto& node : cell.nodes) {
            ops.insert(node.op1);
            ops.insert(node.op2);
        }
        rec.score = static_cast<double>(ops.size()) / static_cast<double>(space.ops.size());
        corpus.push_back(rec);
    }
    return corpus;
}

}  // namespace

TEST_CASE("schema: length, vocab, masks, and encode/decode") {
    auto schema = small_schema(3);
    CHECK(schema.length() == 12);
    CHECK(schema.vocab() == 3 + 1 + 6);
    CHECK(schema.valid_range(0) == std::pair<int, int>{0, 2});   // node0 pred
    CHECK(schema.valid_range(1) == std::pair<int, int>{4, 10});  // node0 op
    CHECK(schema.valid_range(8) == std::pair<int, int>{0, 4});   // node2 pred
    std::mt19937 rng(1);
    const auto cell = random_cell(SearchSpace::by_name("cls-dilation"), 3, CellKind::Normal, rng);
    const auto seq = schema.encode({cell});
    CHECK(schema.is_valid(seq));
    CHECK(schema.decode(seq)[0] == cell);
    // pair schema splits correctly
    SeqSchema pair;
    pair.b = 3;
    pair.slots = {{"edge-dilation", CellKind::DownSC}, {"upsc", CellKind::UpSC}};
    std::mt19937 rng2(2);
    const auto down = random_cell(SearchSpace::by_name("edge-dilation"), 3, CellKind::DownSC, rng2);
    const auto up = random_cell(SearchSpace::by_name("upsc"), 3, CellKind::UpSC, rng2);
    const auto both = pair.encode({down, up});
    CHECK(static_cast<int>(both.size()) == 24);
    const auto cells = pair.decode(both);
    CHECK(cells[0] == down);
    CHECK(cells[1] == up);
}

TEST_CASE("train_nao: empty corpus and invalid records rejected") {
    NaoConfig cfg;
    cfg.epochs = 1;
    NaoModel model(small_schema(), cfg);
    CHECK_THROWS_AS(model.train({}), std::invalid_argument);
    ArchRecord bad;
    bad.x = TokenSeq{0, 0, 0};  // wrong length
    CHECK_THROWS_AS(model.train({bad}), std::invalid_argument);
}

TEST_CASE("train_nao: a single record is memorized") {
    auto schema = small_schema(3);
    auto corpus = diversity_corpus(schema, 1, 5);
    corpus[0].score = 0.7;
    NaoConfig cfg;
    cfg.d = 32;
    cfg.embed = 16;
    cfg.epochs = 300;
    cfg.lr = 5e-3;
    cfg.seed = 3;
    NaoModel model(schema, cfg);
    model.train(corpus);
    CHECK(model.reconstruction_accuracy(corpus) == doctest::Approx(1.0));
    CHECK(std::abs(model.predict_seq(corpus[0].x) - 0.7) < 1e-2);
    // eta = 0 keeps the latent fixed, so greedy decode reproduces the seed
    const auto e = model.encode(corpus[0].x);
    CHECK(model.decode(e) == corpus[0].x);
}

TEST_CASE("train_nao: deterministic per seed and near-monotone objective") {
    auto schema = small_schema(3);
    const auto corpus = diversity_corpus(schema, 24, 11);
    NaoConfig cfg;
    cfg.d = 32;
    cfg.embed = 16;
    cfg.epochs = 60;
    cfg.seed = 9;
    NaoModel a(schema, cfg), b(schema, cfg);
    const auto sa = a.train(corpus);
    const auto sb = b.train(corpus);
    CHECK(sa.epoch_loss == sb.epoch_loss);
    CHECK(a.encode(corpus[0].x) == b.encode(corpus[0].x));
    // joint objective decreases with at most 5% non-monotone epochs
    CHECK(sa.non_monotone_epochs <= static_cast<int>(0.05 * cfg.epochs));
    CHECK(sa.epoch_loss.back() < sa.epoch_loss.front());
}

TEST_CASE("nao: reconstruction, ascent improvement, and candidate validity on a small corpus") {
    auto schema = small_schema(3);
    const auto corpus = diversity_corpus(schema, 48, 21);
    NaoConfig cfg;
    cfg.d = 48;
    cfg.embed = 16;
    cfg.epochs = 220;
    cfg.lr = 5e-3;
    cfg.seed = 17;
    NaoModel model(schema, cfg);
    model.train(corpus);
    CHECK(model.reconstruction_accuracy(corpus) >= 0.95);

    const auto gen = generate_candidates(model, corpus, cfg.eta, cfg.steps, 16);
    CHECK(gen.seeds == 48);
    CHECK(gen.improved >= static_cast<int>(0.9 * gen.seeds));
    CHECK(gen.discarded == 0);  // masked decode cannot produce invalid tokens
    CHECK(!gen.sequences.empty());
    for (const auto& seq : gen.sequences) {
        CHECK(schema.is_valid(seq));
        const auto cells = schema.decode(seq);
        cells[0].validate();
    }
    // distinctness
    std::set<TokenSeq> unique(gen.sequences.begin(), gen.sequences.end());
    CHECK(unique.size() == gen.sequences.size());
}

TEST_CASE("spearman: known correlations and tie handling") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(std::abs(spearman({1, 2, 3, 4, 5, 6, 7, 8}, {3, 1, 4, 1, 5, 9, 2, 6})) < 1.0);
    CHECK(spearman({1, 1, 2, 2}, {1, 1, 2, 2}) == doctest::Approx(1.0));  // averaged tie ranks
    CHECK(spearman({1, 1, 1, 1}, {1, 2, 3, 4}) == 0.0);  // zero variance
    CHECK_THROWS_AS(spearman({1}, {1}), std::invalid_argument);
}
