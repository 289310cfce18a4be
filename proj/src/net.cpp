#include "comwin/net.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "comwin/arrayio.hpp"
#include "comwin/jsonutil.hpp"

namespace comwin {

nlohmann::json net_config_to_json(const NetConfig& cfg) {
    nlohmann::json j;
    j["in_channels"] = cfg.in_channels;
    j["classes"] = cfg.classes;
    j["base_channels"] = cfg.base_channels;
    j["stages"] = cfg.stages;
    j["dsbe"] = cfg.dsbe;
    j["window"] = cfg.window;
    return j;
}

NetConfig net_config_from_json(const nlohmann::json& j) {
    NetConfig def;
    JsonReader r(j, "net config");
    NetConfig cfg;
    cfg.in_channels = r.get("in_channels", def.in_channels);
    cfg.classes = r.get("classes", def.classes);
    cfg.base_channels = r.get("base_channels", def.base_channels);
    cfg.stages = r.get("stages", def.stages);
    cfg.dsbe = r.get("dsbe", def.dsbe);
    cfg.window = r.get("window", def.window);
    r.finish();
    validate_net_config(cfg);
    return cfg;
}

void save_checkpoint(SegNet<float>& net, const std::filesystem::path& dir, int64_t iteration) {
    std::filesystem::create_directories(dir);
    nlohmann::json index;
    index["iteration"] = iteration;
    index["net"] = net_config_to_json(net.config());
    nlohmann::json arrays = nlohmann::json::object();

    auto dump = [&](std::vector<ParamView<float>> views) {
        for (const auto& pv : views) {
            const std::string file = pv.name + ".cwt";
            std::vector<uint32_t> dims;
            for (int d : pv.shape) dims.push_back(static_cast<uint32_t>(d));
            write_array(dir / file, dims, std::span<const float>(*pv.value));
            arrays[pv.name] = {{"file", file}, {"shape", pv.shape}};
        }
    };
    dump(net.params());
    dump(net.state());

    index["arrays"] = std::move(arrays);
    std::ofstream f(dir / "index.json", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write checkpoint index in " + dir.string());
    f << index.dump(2) << "\n";
}

namespace {

nlohmann::json read_index(const std::filesystem::path& dir) {
    std::ifstream f(dir / "index.json");
    if (!f) throw std::runtime_error("missing checkpoint index: " + (dir / "index.json").string());
    nlohmann::json j;
    f >> j;
    return j;
}

}  // namespace

NetConfig checkpoint_net_config(const std::filesystem::path& dir) {
    return net_config_from_json(read_index(dir).at("net"));
}

void load_checkpoint(SegNet<float>& net, const std::filesystem::path& dir) {
    const nlohmann::json index = read_index(dir);
    const auto& arrays = index.at("arrays");

    auto fill = [&](std::vector<ParamView<float>> views) {
        for (auto& pv : views) {
            if (!arrays.contains(pv.name))
                throw std::runtime_error("checkpoint misses array '" + pv.name + "' in " +
                                         dir.string());
            const std::string file = arrays.at(pv.name).at("file").get<std::string>();
            Array a = read_array(dir / file);
            if (a.spec.dtype != Dtype::f32 || a.spec.numel() != pv.value->size())
                throw std::runtime_error("checkpoint array '" + pv.name + "' has wrong shape");
            *pv.value = std::move(std::get<std::vector<float>>(a.data));
        }
    };
    fill(net.params());
    fill(net.state());
}

}  // namespace comwin
