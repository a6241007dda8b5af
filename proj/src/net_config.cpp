#include "drn/net_config.hpp"

namespace drn {

void NetConfig::validate() const
{
    if (height <= 0 || width <= 0) throw ConfigError("image size must be positive");
    if (n_down < 1) throw ConfigError("n_down must be at least 1");
    const Index step = Index{1} << n_down;
    if (height % step != 0 || width % step != 0)
        throw ConfigError("image size " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not divisible by 2^" + std::to_string(n_down));
    if (base_channels < 2 || style_dim < 1 || mlp_hidden < 1 || disc_channels < 1)
        throw ConfigError("channel counts must be positive (base_channels >= 2)");
    if (n_transfer_blocks < 0 || n_res_blocks < 0) throw ConfigError("block counts must be non-negative");
    if (face_size % step != 0) throw ConfigError("face_size must be divisible by 2^n_down");
}

void to_json(nlohmann::json& j, const NetConfig& c)
{
    j = nlohmann::json{{"height", c.height},
                       {"width", c.width},
                       {"base_channels", c.base_channels},
                       {"n_down", c.n_down},
                       {"n_transfer_blocks", c.n_transfer_blocks},
                       {"n_res_blocks", c.n_res_blocks},
                       {"style_dim", c.style_dim},
                       {"mlp_hidden", c.mlp_hidden},
                       {"pose_channels", c.pose_channels},
                       {"face_size", c.face_size},
                       {"disc_channels", c.disc_channels},
                       {"identity_modulation_init", c.identity_modulation_init}};
}

void from_json(const nlohmann::json& j, NetConfig& c)
{
    NetConfig d;
    for (const auto& [key, _] : j.items()) {
        nlohmann::json probe;
        to_json(probe, d);
        if (!probe.contains(key)) throw ConfigError("unknown net config key '" + key + "'");
    }
    c.height = j.value("height", d.height);
    c.width = j.value("width", d.width);
    c.base_channels = j.value("base_channels", d.base_channels);
    c.n_down = j.value("n_down", d.n_down);
    c.n_transfer_blocks = j.value("n_transfer_blocks", d.n_transfer_blocks);
    c.n_res_blocks = j.value("n_res_blocks", d.n_res_blocks);
    c.style_dim = j.value("style_dim", d.style_dim);
    c.mlp_hidden = j.value("mlp_hidden", d.mlp_hidden);
    c.pose_channels = j.value("pose_channels", d.pose_channels);
    c.face_size = j.value("face_size", d.face_size);
    c.disc_channels = j.value("disc_channels", d.disc_channels);
    c.identity_modulation_init = j.value("identity_modulation_init", d.identity_modulation_init);
}

}  // namespace drn
