#include "laf/checkpoint.hpp"

#include <cstring>

namespace laf {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'L', 'A', 'F', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
void append_le(std::string& out, T value) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.append(bytes, sizeof(T));
}

template <typename T>
T read_le(const std::string& data, size_t& offset) {
    if (offset + sizeof(T) > data.size()) throw FormatError("checkpoint truncated");
    T value;
    std::memcpy(&value, data.data() + offset, sizeof(T));
    offset += sizeof(T);
    return value;
}

json require(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("checkpoint metadata missing '") + key + "'");
    return j.at(key);
}

}  // namespace

json model_config_to_json(const ModelConfig& config) {
    json layers = json::array();
    for (const ConvLayerSpec& l : config.backbone.layers)
        layers.push_back({{"out_channels", l.out_channels},
                          {"stride", l.stride},
                          {"kernel", l.kernel},
                          {"use_batchnorm", l.use_batchnorm},
                          {"use_bias", l.use_bias}});
    return json{{"backbone",
                 {{"in_channels", config.backbone.in_channels},
                  {"input_size", config.backbone.input_size},
                  {"layers", layers}}},
                {"mlp_hidden1", config.mlp_hidden1},
                {"mlp_hidden2", config.mlp_hidden2},
                {"primitive_dim", config.primitive_dim},
                {"pool_target_extent", config.pool_target_extent}};
}

ModelConfig model_config_from_json(const json& j) {
    try {
        ModelConfig config;
        json bb = require(j, "backbone");
        config.backbone.in_channels = require(bb, "in_channels").get<int>();
        config.backbone.input_size = require(bb, "input_size").get<int>();
        config.backbone.layers.clear();
        for (const json& l : require(bb, "layers")) {
            ConvLayerSpec spec;
            spec.out_channels = require(l, "out_channels").get<int>();
            spec.stride = require(l, "stride").get<int>();
            spec.kernel = require(l, "kernel").get<int>();
            spec.use_batchnorm = require(l, "use_batchnorm").get<bool>();
            spec.use_bias = require(l, "use_bias").get<bool>();
            config.backbone.layers.push_back(spec);
        }
        config.mlp_hidden1 = require(j, "mlp_hidden1").get<int>();
        config.mlp_hidden2 = require(j, "mlp_hidden2").get<int>();
        config.primitive_dim = require(j, "primitive_dim").get<int>();
        config.pool_target_extent = require(j, "pool_target_extent").get<int>();
        config.validate();
        return config;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad model config: ") + e.what());
    }
}

json train_config_to_json(const TrainConfig& config) {
    return json{{"epochs", config.epochs},
                {"batch_size", config.batch_size},
                {"learning_rate", config.learning_rate},
                {"seed", config.seed},
                {"optimizer", optimizer_name(config.optimizer)},
                {"early_stop_patience", config.early_stop_patience},
                {"bn_momentum", config.bn_momentum},
                {"sgd_momentum", config.sgd_momentum}};
}

TrainConfig train_config_from_json(const json& j) {
    try {
        TrainConfig config;
        config.epochs = require(j, "epochs").get<int>();
        config.batch_size = require(j, "batch_size").get<int>();
        config.learning_rate = require(j, "learning_rate").get<double>();
        config.seed = require(j, "seed").get<uint64_t>();
        config.optimizer = parse_optimizer(require(j, "optimizer").get<std::string>());
        config.early_stop_patience = require(j, "early_stop_patience").get<int>();
        config.bn_momentum = require(j, "bn_momentum").get<double>();
        config.sgd_momentum = require(j, "sgd_momentum").get<double>();
        return config;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad train config: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    AggregationModel& model = const_cast<AggregationModel&>(ckpt.model);
    std::vector<NamedParam> table = model_param_table(model);

    json dir = json::array();
    for (const NamedParam& p : table)
        dir.push_back({{"name", p.name}, {"size", p.data->size()}});
    json meta{{"format_version", ckpt.format_version},
              {"model_config", model_config_to_json(model.config)},
              {"train",
               {{"config", train_config_to_json(ckpt.meta.config)},
                {"best_val_ap", ckpt.meta.best_val_ap},
                {"best_epoch", ckpt.meta.best_epoch},
                {"epochs_run", ckpt.meta.epochs_run},
                {"note", ckpt.meta.note}}},
              {"arrays", dir}};
    std::string meta_str = meta.dump();

    std::string out;
    out.reserve(meta_str.size() + 64);
    out.append(kMagic, sizeof(kMagic));
    append_le<uint32_t>(out, ckpt.format_version);
    append_le<uint64_t>(out, meta_str.size());
    out += meta_str;
    for (const NamedParam& p : table)
        for (double v : *p.data) append_le<float>(out, static_cast<float>(v));
    atomic_write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::string data;
    try {
        data = read_file(path);
    } catch (const Error& e) {
        throw FormatError(std::string("cannot read checkpoint: ") + e.what());
    }
    size_t offset = 0;
    if (data.size() < sizeof(kMagic)) throw FormatError("checkpoint truncated");
    if (std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) throw FormatError("bad checkpoint magic");
    offset = sizeof(kMagic);

    uint32_t version = read_le<uint32_t>(data, offset);
    if (version != kVersion)
        throw UnsupportedVersion("checkpoint format version " + std::to_string(version) + ", expected " +
                                 std::to_string(kVersion));
    uint64_t meta_len = read_le<uint64_t>(data, offset);
    if (offset + meta_len > data.size()) throw FormatError("checkpoint truncated");

    json meta;
    try {
        meta = json::parse(data.substr(offset, meta_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
    }
    offset += meta_len;

    Checkpoint ckpt;
    ckpt.format_version = version;
    ModelConfig config = model_config_from_json(require(meta, "model_config"));
    ckpt.model = init_model(config, 0);
    json train = require(meta, "train");
    try {
        ckpt.meta.config = train_config_from_json(require(train, "config"));
        ckpt.meta.best_val_ap = require(train, "best_val_ap").get<double>();
        ckpt.meta.best_epoch = require(train, "best_epoch").get<int>();
        ckpt.meta.epochs_run = require(train, "epochs_run").get<int>();
        ckpt.meta.note = require(train, "note").get<std::string>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
    }

    std::vector<NamedParam> table = model_param_table(ckpt.model);
    json dir = require(meta, "arrays");
    if (!dir.is_array() || dir.size() != table.size()) throw FormatError("array directory does not match the model");
    for (size_t i = 0; i < table.size(); ++i) {
        std::string name;
        size_t size = 0;
        try {
            name = require(dir[i], "name").get<std::string>();
            size = require(dir[i], "size").get<size_t>();
        } catch (const json::exception& e) {
            throw FormatError(std::string("bad array directory: ") + e.what());
        }
        if (name != table[i].name || size != table[i].data->size())
            throw FormatError("array directory entry '" + name + "' does not match the model");
        for (double& v : *table[i].data) v = static_cast<double>(read_le<float>(data, offset));
    }
    if (offset != data.size()) throw FormatError("trailing bytes after checkpoint payload");
    return ckpt;
}

}  // namespace laf
