#pragma once

#include <json.hpp>

#include "drn/tensor.hpp"

namespace drn {

/// Architecture hyper-parameters shared by every network in the pipeline.
struct NetConfig {
    Index height = 256;
    Index width = 176;
    Index base_channels = 64;     // first down-sampling layer; doubled per further layer
    int n_down = 3;               // stride-2 layers in each encoder, up-stages in each decoder
    int n_transfer_blocks = 9;
    int n_res_blocks = 6;         // residual blocks at guidance resolution in the detail generator
    Index style_dim = 128;        // style code length
    Index mlp_hidden = 128;
    Index pose_channels = 18;
    Index face_size = 64;
    Index disc_channels = 64;
    bool identity_modulation_init = true;  // zero final MLP layer so scale = 1, shift = 0 at start

    /// Channels of the guidance map: base · 2^(n_down - 1).
    Index guidance_channels() const { return base_channels << (n_down - 1); }
    Index guidance_height() const { return height >> n_down; }
    Index guidance_width() const { return width >> n_down; }

    void validate() const;
};

void to_json(nlohmann::json& j, const NetConfig& c);
void from_json(const nlohmann::json& j, NetConfig& c);

}  // namespace drn
