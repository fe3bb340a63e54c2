#include "srnn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace srnn::models {

namespace {

constexpr char kMagic[8] = {'S', 'R', 'N', 'N', 'C', 'K', '0', '1'};

nlohmann::json mlp_spec_json(const MlpSpec& s) {
  nlohmann::json j = {
      {"widths", s.widths},
      {"hidden", act_name(s.hidden)},
      {"output", act_name(s.output)},
  };
  if (!s.input_shift.empty()) j["input_shift"] = s.input_shift;
  if (!s.input_scale.empty()) j["input_scale"] = s.input_scale;
  if (!s.output_scale.empty()) j["output_scale"] = s.output_scale;
  return j;
}

MlpSpec mlp_spec_from_json(const nlohmann::json& j) {
  MlpSpec s;
  s.widths = j.at("widths").get<std::vector<std::size_t>>();
  s.hidden = act_from_name(j.at("hidden").get<std::string>());
  s.output = act_from_name(j.at("output").get<std::string>());
  if (j.contains("input_shift")) s.input_shift = j["input_shift"].get<std::vector<double>>();
  if (j.contains("input_scale")) s.input_scale = j["input_scale"].get<std::vector<double>>();
  if (j.contains("output_scale")) s.output_scale = j["output_scale"].get<std::vector<double>>();
  s.validate();
  return s;
}

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64_le(std::string& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
  nlohmann::json header;
  header["kind"] = model_kind_name(model.kind());
  header["d"] = model.dim();
  switch (model.kind()) {
    case ModelKind::kHnet:
      header["kinetic"] = mlp_spec_json(model.hnet().kinetic);
      header["potential"] = mlp_spec_json(model.hnet().potential);
      break;
    case ModelKind::kOnet:
      header["net"] = mlp_spec_json(model.onet().net);
      break;
    case ModelKind::kRnn:
      header["state_dim"] = model.rnn().state_dim;
      header["hidden"] = model.rnn().hidden;
      break;
  }
  if (model.rebound) {
    const ReboundSpec& r = model.rebound->spec;
    header["rebound"] = {
        {"patch_big", r.patch_big},       {"patch_small", r.patch_small},
        {"shared_hidden", r.shared_hidden}, {"branch_hidden", r.branch_hidden},
        {"gamma_hidden", r.gamma_hidden}, {"fix_alpha", r.fix_alpha},
        {"eps", r.eps},
    };
  }
  header["param_count"] = model.param_count();
  const std::string header_str = header.dump();

  std::string blob;
  const std::vector<double> flat = model.gather_params();
  blob.reserve(12 + header_str.size() + 8 * flat.size());
  blob.append(kMagic, sizeof(kMagic));
  put_u32_le(blob, static_cast<std::uint32_t>(header_str.size()));
  blob.append(header_str);
  for (double v : flat) put_f64_le(blob, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open for writing: " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) fail("write failed: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open checkpoint: " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < 12 || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
    fail("checkpoint magic mismatch: " + path.string());
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  std::uint32_t header_len = 0;
  for (int i = 0; i < 4; ++i) {
    header_len |= static_cast<std::uint32_t>(bytes[8 + i]) << (8 * i);
  }
  if (blob.size() < 12 + static_cast<std::size_t>(header_len)) {
    fail("checkpoint truncated: " + path.string());
  }
  const nlohmann::json header = nlohmann::json::parse(blob.substr(12, header_len));

  const std::string kind = header.at("kind").get<std::string>();
  Model model{HnetModel{}, std::nullopt};
  if (kind == "hnet") {
    HnetModel m;
    m.kinetic = mlp_spec_from_json(header.at("kinetic"));
    m.potential = mlp_spec_from_json(header.at("potential"));
    model.core = std::move(m);
  } else if (kind == "onet") {
    OnetModel m;
    m.net = mlp_spec_from_json(header.at("net"));
    model.core = std::move(m);
  } else if (kind == "rnn") {
    RnnModel m;
    m.state_dim = header.at("state_dim").get<std::size_t>();
    m.hidden = header.at("hidden").get<std::size_t>();
    model.core = std::move(m);
  } else {
    fail("checkpoint: unknown model kind " + kind);
  }
  if (header.contains("rebound")) {
    const nlohmann::json& r = header["rebound"];
    ReboundModel rm;
    rm.spec.patch_big = r.at("patch_big").get<std::size_t>();
    rm.spec.patch_small = r.at("patch_small").get<std::size_t>();
    rm.spec.shared_hidden = r.at("shared_hidden").get<std::size_t>();
    rm.spec.branch_hidden = r.at("branch_hidden").get<std::size_t>();
    rm.spec.gamma_hidden = r.at("gamma_hidden").get<std::size_t>();
    rm.spec.fix_alpha = r.at("fix_alpha").get<bool>();
    rm.spec.eps = r.at("eps").get<double>();
    model.rebound = std::move(rm);
  }

  // Size the parameter stores, then fill from the payload.
  std::size_t core_count = 0;
  switch (model.kind()) {
    case ModelKind::kHnet:
      core_count = model.hnet().kinetic.param_count() + model.hnet().potential.param_count();
      model.hnet().params.values.resize(core_count);
      break;
    case ModelKind::kOnet:
      core_count = model.onet().net.param_count();
      model.onet().params.values.resize(core_count);
      break;
    case ModelKind::kRnn:
      core_count = model.rnn().param_count();
      model.rnn().params.values.resize(core_count);
      break;
  }
  if (model.rebound) {
    model.rebound->params.values.resize(model.rebound->spec.param_count());
  }

  const std::size_t expected = header.at("param_count").get<std::size_t>();
  if (expected != model.param_count()) {
    fail("checkpoint: header param_count disagrees with specs");
  }
  const std::size_t payload_off = 12 + header_len;
  if (blob.size() - payload_off != 8 * expected) {
    fail("checkpoint: payload size disagreement");
  }
  std::vector<double> flat(expected);
  const unsigned char* p = bytes + payload_off;
  for (std::size_t i = 0; i < expected; ++i, p += 8) flat[i] = get_f64_le(p);
  model.scatter_params(flat);
  return model;
}

}  // namespace srnn::models
