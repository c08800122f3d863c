#pragma once

#include "mono3d/backbone.hpp"
#include "mono3d/pdf_fusion.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace mono3d {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// On-disk archive: architecture, named tensors and free-form metadata
/// (training state lives there too).
struct Checkpoint {
  std::uint32_t format_version = kCheckpointFormatVersion;
  ArchConfig arch;
  std::vector<std::pair<std::string, Planar<float>>> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const Planar<float>* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const nlohmann::json& j);

/// Encoder E (shared-weight extractor for both views, deformable fusion,
/// reconstructor) and decoder D (extractor, deformable split, shared-weight
/// reconstructor for both views). Frames enter and leave in [0,1].
template <typename S>
class Mono3dModel {
 public:
  struct EncodeStep {
    Var<S> mono;  // unquantized
    FeaturePyramid<S> fused;
  };
  struct DecodeStep {
    Var<S> left;
    Var<S> right;
    FeaturePyramid<S> left_pyramid;
    FeaturePyramid<S> right_pyramid;
  };

  explicit Mono3dModel(const ArchConfig& arch = {}, std::uint64_t seed = 0);
  Mono3dModel(const Mono3dModel&) = delete;
  Mono3dModel& operator=(const Mono3dModel&) = delete;

  EncodeStep encode(const Var<S>& left, const Var<S>& right,
                    const FeaturePyramid<S>* previous) const;
  DecodeStep decode(const Var<S>& mono, const FeaturePyramid<S>* previous_left,
                    const FeaturePyramid<S>* previous_right) const;

  const ArchConfig& arch() const { return arch_; }
  /// When off, `previous` pyramids are ignored (image-mode models).
  bool recurrent() const { return recurrent_; }
  void set_recurrent(bool on) { recurrent_ = on; }
  ParameterSet<S>& encoder_params() { return encoder_params_; }
  ParameterSet<S>& decoder_params() { return decoder_params_; }
  const ParameterSet<S>& encoder_params() const { return encoder_params_; }
  const ParameterSet<S>& decoder_params() const { return decoder_params_; }

  /// Every parameter, names prefixed with `encoder.` or `decoder.`.
  std::vector<std::pair<std::string, Var<S>>> named_parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  const FeatureExtractor<S>& encoder_extractor() const { return enc_extract_; }
  const Reconstructor<S>& encoder_reconstructor() const { return enc_reconstruct_; }
  const PyramidDeformableFusion<S>& encoder_fusion() const { return enc_fuse_; }
  const FeatureExtractor<S>& decoder_extractor() const { return dec_extract_; }
  const Reconstructor<S>& decoder_reconstructor() const { return dec_reconstruct_; }
  const PyramidDeformableFusion<S>& decoder_split() const { return dec_split_; }

  Checkpoint to_checkpoint() const;
  /// Copies tensors by name and the recurrence flag; throws on architecture
  /// or shape mismatch.
  void load(const Checkpoint& ckpt);

 private:
  ArchConfig arch_;
  bool recurrent_ = true;
  ParameterSet<S> encoder_params_;
  ParameterSet<S> decoder_params_;
  FeatureExtractor<S> enc_extract_;
  PyramidDeformableFusion<S> enc_fuse_;
  Reconstructor<S> enc_reconstruct_;
  FeatureExtractor<S> dec_extract_;
  PyramidDeformableFusion<S> dec_split_;
  Reconstructor<S> dec_reconstruct_;
};

}  // namespace mono3d
