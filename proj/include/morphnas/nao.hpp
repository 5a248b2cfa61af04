// NAO surrogate: recurrent sequence encoder into a latent space, performance
// predictor, sequence decoder, and latent-space gradient-ascent candidate
// generation.
#pragma once

#include <memory>

#include "morphnas/cells.hpp"

namespace morphnas {

struct ArchRecord {
    TokenSeq x;
    double score = 0.0;  // validation score in [0,1]
};

// Describes the token sequences a surrogate instance works on: one or two
// cell slots, each tied to a search space. Token values follow encode_cell;
// per-position validity masks come from the node structure.
struct SeqSchema {
    struct Slot {
        std::string space;
        CellKind kind = CellKind::Normal;
    };
    std::vector<Slot> slots;
    int b = 5;

    int tokens_per_cell() const { return 4 * b; }
    int length() const { return tokens_per_cell() * static_cast<int>(slots.size()); }
    int vocab() const;                              // B+1 + max |ops| over slots
    int bos_token() const { return vocab(); }       // embedding-table row only
    std::pair<int, int> valid_range(int pos) const;  // [lo, hi) of legal tokens

    TokenSeq encode(const std::vector<CellGraph>& cells) const;
    std::vector<CellGraph> decode(const TokenSeq& seq) const;  // throws on invalid
    bool is_valid(const TokenSeq& seq) const;
};

struct NaoConfig {
    int d = 64;        // hidden / latent dimension
    int embed = 48;    // token embedding dimension
    double lr = 5e-3;  // Adam
    int epochs = 200;
    int batch = 32;
    double lambda = 0.8;  // reconstruction weight in the joint loss
    double eta = 0.01;    // latent ascent step size
    int steps = 10;       // ascent steps
    double weight_decay = 1e-4;
    double latent_dropout = 0.2;  // on the predictor input, training only
    unsigned seed = 0;
};

struct NaoTrainStats {
    std::vector<double> epoch_loss;  // epoch-averaged joint objective
    int non_monotone_epochs = 0;     // epochs where the loss rose
};

class NaoModel {
public:
    NaoModel(SeqSchema schema, NaoConfig cfg);
    ~NaoModel();
    NaoModel(NaoModel&&) noexcept;
    NaoModel& operator=(NaoModel&&) noexcept;

    // Joint objective: (s - P(E(x)))^2 + lambda * token cross-entropy.
    // Throws on NaN loss or an empty corpus.
    NaoTrainStats train(const std::vector<ArchRecord>& corpus);

    std::vector<double> encode(const TokenSeq& x) const;
    double predict(const std::vector<double>& latent) const;
    double predict_seq(const TokenSeq& x) const { return predict(encode(x)); }
    // Latent gradient ascent on the predictor output.
    std::vector<double> ascend(const std::vector<double>& latent, double eta, int steps) const;
    // Greedy argmax decode restricted to schema-legal tokens per position.
    TokenSeq decode(const std::vector<double>& latent) const;

    // Teacher-forced argmax token accuracy over a corpus.
    double reconstruction_accuracy(const std::vector<ArchRecord>& corpus) const;

    const SeqSchema& schema() const;
    const NaoConfig& config() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct GeneratedCandidates {
    std::vector<TokenSeq> sequences;  // distinct, schema-valid
    int discarded = 0;                // invalid decodes dropped
    int improved = 0;                 // seeds with P(e') >= P(e)
    int seeds = 0;
};

// For each seed: ascend its latent and greedy-decode; keeps up to k distinct
// valid sequences. Returns an empty list (with counts) if everything decodes
// invalid.
GeneratedCandidates generate_candidates(const NaoModel& model, const std::vector<ArchRecord>& seeds,
                                        double eta, int steps, int k);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace morphnas
