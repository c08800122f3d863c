#include "mono3d/model.hpp"

#include "mono3d/ops.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mono3d {

namespace {

constexpr char kMagic[8] = {'M', 'O', 'N', 'O', '3', 'D', 'C', 'K'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated while reading " + what);
  return v;
}

std::string get_string(std::istream& in, const std::string& what) {
  const auto n = get<std::uint32_t>(in, what);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("checkpoint truncated while reading " + what);
  return s;
}

template <typename S>
Var<S> centered(const Var<S>& x) {
  return ops::straight_through(x, [&] {
    Planar<S> v = x.value();
    v.matrix().array() -= S(0.5);
    return v;
  }());
}

template <typename S>
Var<S> uncentered(const Var<S>& x) {
  return ops::straight_through(x, [&] {
    Planar<S> v = x.value();
    v.matrix().array() += S(0.5);
    return v;
  }());
}

}  // namespace

const Planar<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

nlohmann::json to_json(const ArchConfig& arch) {
  return {{"channels", arch.channels},
          {"residual_blocks", arch.residual_blocks},
          {"offset_groups", arch.offset_groups}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  a.channels = j.at("channels").get<std::array<int, 3>>();
  a.residual_blocks = j.at("residual_blocks").get<int>();
  a.offset_groups = j.at("offset_groups").get<int>();
  a.validate();
  return a;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, ckpt.format_version);
    nlohmann::json header = {{"arch", to_json(ckpt.arch)}, {"meta", ckpt.meta}};
    const std::string h = header.dump();
    put<std::uint32_t>(out, std::uint32_t(h.size()));
    out.write(h.data(), std::streamsize(h.size()));
    put<std::uint32_t>(out, std::uint32_t(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      put<std::uint32_t>(out, std::uint32_t(name.size()));
      out.write(name.data(), std::streamsize(name.size()));
      put<std::int32_t>(out, t.channels());
      put<std::int32_t>(out, t.height());
      put<std::int32_t>(out, t.width());
      out.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("short write: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error(path.string() + ": not a checkpoint archive");
  Checkpoint ckpt;
  ckpt.format_version = get<std::uint32_t>(in, "format version");
  if (ckpt.format_version != kCheckpointFormatVersion)
    throw std::runtime_error(path.string() + ": unsupported checkpoint format version " +
                             std::to_string(ckpt.format_version) + " (expected " +
                             std::to_string(kCheckpointFormatVersion) + ")");
  const auto header = nlohmann::json::parse(get_string(in, "header"));
  ckpt.arch = arch_from_json(header.at("arch"));
  ckpt.meta = header.value("meta", nlohmann::json::object());
  const auto count = get<std::uint32_t>(in, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in, "tensor name");
    const int c = get<std::int32_t>(in, name), h = get<std::int32_t>(in, name),
              w = get<std::int32_t>(in, name);
    if (c < 0 || h < 0 || w < 0) throw std::runtime_error("checkpoint: bad shape for " + name);
    Planar<float> t(c, h, w);
    in.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint truncated while reading " + name);
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

template <typename S>
Mono3dModel<S>::Mono3dModel(const ArchConfig& arch, std::uint64_t seed) : arch_(arch) {
  arch.validate();
  Rng rng(seed);
  std::array<int, 3> doubled{};
  for (int l = 0; l < 3; ++l) doubled[l] = 2 * arch.channels[l];
  enc_extract_ = FeatureExtractor<S>(encoder_params_, "extractor", 3, arch, rng);
  enc_fuse_ = PyramidDeformableFusion<S>(encoder_params_, "fusion", doubled, arch.channels,
                                         arch.offset_groups, rng);
  enc_reconstruct_ = Reconstructor<S>(encoder_params_, "reconstructor", 3, arch, rng);
  dec_extract_ = FeatureExtractor<S>(decoder_params_, "extractor", 3, arch, rng);
  dec_split_ = PyramidDeformableFusion<S>(decoder_params_, "split", arch.channels, doubled,
                                          arch.offset_groups, rng);
  dec_reconstruct_ = Reconstructor<S>(decoder_params_, "reconstructor", 3, arch, rng);
}

template <typename S>
typename Mono3dModel<S>::EncodeStep Mono3dModel<S>::encode(
    const Var<S>& left, const Var<S>& right, const FeaturePyramid<S>* previous) const {
  if (!left.value().same_shape(right.value()))
    throw std::invalid_argument("encode: left/right dimensions differ");
  auto pl = enc_extract_.extract(centered(left));
  auto pr = enc_extract_.extract(centered(right));
  EncodeStep step;
  step.fused = fuse(enc_fuse_, pl, pr);
  step.mono =
      uncentered(enc_reconstruct_.reconstruct(step.fused, recurrent_ ? previous : nullptr));
  return step;
}

template <typename S>
typename Mono3dModel<S>::DecodeStep Mono3dModel<S>::decode(
    const Var<S>& mono, const FeaturePyramid<S>* previous_left,
    const FeaturePyramid<S>* previous_right) const {
  auto pm = dec_extract_.extract(centered(mono));
  auto [pl, pr] = split(dec_split_, pm);
  DecodeStep step;
  if (!recurrent_) previous_left = previous_right = nullptr;
  step.left = uncentered(dec_reconstruct_.reconstruct(pl, previous_left));
  step.right = uncentered(dec_reconstruct_.reconstruct(pr, previous_right));
  step.left_pyramid = std::move(pl);
  step.right_pyramid = std::move(pr);
  return step;
}

template <typename S>
std::vector<std::pair<std::string, Var<S>>> Mono3dModel<S>::named_parameters() const {
  std::vector<std::pair<std::string, Var<S>>> out;
  for (const auto& [n, v] : encoder_params_.entries()) out.emplace_back("encoder." + n, v);
  for (const auto& [n, v] : decoder_params_.entries()) out.emplace_back("decoder." + n, v);
  return out;
}

template <typename S>
std::size_t Mono3dModel<S>::parameter_count() const {
  return encoder_params_.scalar_count() + decoder_params_.scalar_count();
}

template <typename S>
void Mono3dModel<S>::zero_grad() {
  encoder_params_.zero_grad();
  decoder_params_.zero_grad();
}

template <typename S>
Checkpoint Mono3dModel<S>::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.arch = arch_;
  ckpt.meta["recurrent"] = recurrent_;
  for (const auto& [n, v] : named_parameters())
    ckpt.tensors.emplace_back(n, v.value().template cast<float>());
  return ckpt;
}

template <typename S>
void Mono3dModel<S>::load(const Checkpoint& ckpt) {
  if (!(ckpt.arch == arch_))
    throw std::invalid_argument("checkpoint architecture does not match the model");
  if (ckpt.meta.contains("recurrent")) recurrent_ = ckpt.meta.at("recurrent").get<bool>();
  for (auto& [n, v] : named_parameters()) {
    const auto* t = ckpt.find(n);
    if (!t) throw std::invalid_argument("checkpoint lacks parameter " + n);
    const auto& cur = v.value();
    if (t->channels() != cur.channels() || t->height() != cur.height() ||
        t->width() != cur.width())
      throw std::invalid_argument("checkpoint parameter " + n + " has shape " +
                                  t->shape_string() + ", expected " + v.value().shape_string());
    auto copy = v;
    copy.mutable_value() = t->template cast<S>();
  }
}

template class Mono3dModel<float>;
template class Mono3dModel<double>;

}  // namespace mono3d
