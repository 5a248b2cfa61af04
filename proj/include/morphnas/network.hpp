// Backbone assembly: turns cell genotypes into trainable networks.
#pragma once

#include <map>
#include <memory>

#include "morphnas/cells.hpp"
#include "morphnas/layers.hpp"

namespace morphnas {

enum class BackboneKind { CifarStack, UnetSearch, MultiscaleDecoder };

std::string backbone_kind_name(BackboneKind k);
BackboneKind backbone_kind_from_name(const std::string& s);

struct Backbone {
    BackboneKind kind = BackboneKind::CifarStack;
    int n = 1;           // normal cells per block (cifar-stack)
    int f = 8;           // base channels
    int b = 5;           // nodes per cell
    int in_channels = 1;
    int num_classes = 4;  // cifar-stack head
};

// A built network. forward() returns (N,classes) logits for cifar-stack and a
// (N,1,H,W) sigmoid edge map for the two edge backbones.
class Network : public Module<float> {
public:
    std::vector<Var<float>> parameters() {
        std::vector<Var<float>> v;
        collect_params(v);
        return v;
    }
    std::vector<std::vector<float>*> buffers() {
        std::vector<std::vector<float>*> v;
        collect_buffers(v);
        return v;
    }
    std::int64_t parameter_count() {
        std::int64_t n = 0;
        for (const auto& p : parameters()) n += p->numel();
        return n;
    }
    // Named stage resolutions for an input of (h, w); empty for cifar-stack.
    virtual std::vector<std::pair<std::string, std::pair<int, int>>> stage_sizes(int h, int w) const {
        (void)h;
        (void)w;
        return {};
    }

    // Shape of the pre-head feature map, recorded by the latest forward().
    Shape last_stage_shape;
};

struct BuiltNetwork {
    std::unique_ptr<Network> net;
    Backbone backbone;
    CellGraph cell_a, cell_b;  // cifar-stack: (normal, reduction); unet: (downsc, upsc);
                               // multiscale-decoder: cell_a used in every block, cell_b ignored
};

// Validates that the cells' ops belong to their declared spaces and that the
// backbone/cell pairing is shape-feasible.
BuiltNetwork build_network(const CellGraph& cell_a, const CellGraph& cell_b, const Backbone& backbone,
                           unsigned seed);

// Checkpoints: a directory of MTEN files plus a key-value manifest.
void save_checkpoint(BuiltNetwork& built, const std::string& dir);
BuiltNetwork load_checkpoint(const std::string& dir);

}  // namespace morphnas
