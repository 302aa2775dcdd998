#include "soilgen/model_store.hpp"

#include "soilgen/common.hpp"

namespace soilgen::store {

using nlohmann::json;

json to_json(const pad::PaddingConfig& c) {
    return {{"d_model", c.d_model},
            {"heads", c.heads},
            {"self_layers", c.self_layers},
            {"ffn_hidden", c.ffn_hidden},
            {"conv_width", c.conv_width}};
}

json to_json(const sogm::SogmConfig& c) {
    return {{"encoder",
             {{"d_model", c.encoder.d_model},
              {"heads", c.encoder.heads},
              {"sentence_layers", c.encoder.sentence_layers},
              {"set_layers", c.encoder.set_layers},
              {"ffn_hidden", c.encoder.ffn_hidden}}},
            {"unet",
             {{"base_ch", c.unet.base_ch},
              {"cond_dim", c.unet.cond_dim},
              {"heads", c.unet.heads},
              {"time_dim", c.unet.time_dim}}},
            {"T", c.T}};
}

json to_json(const wet::WetModelConfig& c) {
    return {{"base_ch", c.base_ch}, {"iteration_cap", c.iteration_cap}};
}

pad::PaddingConfig padding_config(const json& j) {
    pad::PaddingConfig c;
    c.d_model = j.value("d_model", c.d_model);
    c.heads = j.value("heads", c.heads);
    c.self_layers = j.value("self_layers", c.self_layers);
    c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
    c.conv_width = j.value("conv_width", c.conv_width);
    return c;
}

sogm::SogmConfig sogm_config(const json& j) {
    sogm::SogmConfig c;
    const json& e = j.value("encoder", json::object());
    c.encoder.d_model = e.value("d_model", c.encoder.d_model);
    c.encoder.heads = e.value("heads", c.encoder.heads);
    c.encoder.sentence_layers = e.value("sentence_layers", c.encoder.sentence_layers);
    c.encoder.set_layers = e.value("set_layers", c.encoder.set_layers);
    c.encoder.ffn_hidden = e.value("ffn_hidden", c.encoder.ffn_hidden);
    const json& u = j.value("unet", json::object());
    c.unet.base_ch = u.value("base_ch", c.unet.base_ch);
    c.unet.cond_dim = u.value("cond_dim", c.unet.cond_dim);
    c.unet.heads = u.value("heads", c.unet.heads);
    c.unet.time_dim = u.value("time_dim", c.unet.time_dim);
    c.T = j.value("T", c.T);
    return c;
}

wet::WetModelConfig wet_config(const json& j) {
    wet::WetModelConfig c;
    c.base_ch = j.value("base_ch", c.base_ch);
    c.iteration_cap = j.value("iteration_cap", c.iteration_cap);
    return c;
}

void save_model(const std::filesystem::path& path, const nn::ParameterStore& ps,
                const std::string& kind, json config, json fields) {
    SG_CHECK(fields.is_object(), value_error, "model fields must be a JSON object");
    fields["kind"] = kind;
    fields["config"] = std::move(config);
    nn::save_checkpoint(path, ps, fields);
}

json load_model_info(const std::filesystem::path& path, const std::string& kind) {
    json manifest = nn::read_checkpoint_manifest(path);
    json extra = manifest.value("extra", json::object());
    std::string found = extra.value("kind", "");
    SG_CHECK(found == kind, io_error, path.string(), ": expected a ", kind,
             " checkpoint, found '", found.empty() ? "<none>" : found, "'");
    return extra;
}

}  // namespace soilgen::store
