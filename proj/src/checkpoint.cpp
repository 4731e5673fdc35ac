#include "tta/checkpoint.hpp"

#include <array>
#include <fstream>

#include "tta/binary_io.hpp"
#include "tta/error.hpp"

namespace tta {

namespace {
constexpr std::array<char, 8> kMagic = {'T', 'T', 'A', 'C', 'K', 'P', 'T', '\0'};
}

void write_checkpoint(const SmallClassifier& model, std::ostream& out) {
  model.validate();
  out.write(kMagic.data(), kMagic.size());
  detail::put<std::uint8_t>(out, kCheckpointVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.input_dim()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.num_layers()));
  for (const auto& l : model.layers()) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_dim()));
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(l.activation));
  }
  for (const auto& l : model.layers()) {
    detail::put<double>(out, l.bn.eps);
    detail::put_array(out, l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    detail::put_array(out, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    detail::put_array(out, l.bn.gamma.data(), static_cast<std::size_t>(l.bn.gamma.size()));
    detail::put_array(out, l.bn.beta.data(), static_cast<std::size_t>(l.bn.beta.size()));
    detail::put_array(out, l.bn.running_mean.data(), static_cast<std::size_t>(l.bn.running_mean.size()));
    detail::put_array(out, l.bn.running_var.data(), static_cast<std::size_t>(l.bn.running_var.size()));
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing checkpoint");
}

SmallClassifier read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  require(static_cast<bool>(in) && magic == kMagic, ErrorCode::kFormat, "not a checkpoint (bad magic)");
  const auto version = detail::get<std::uint8_t>(in, "version");
  require(version == kCheckpointVersion, ErrorCode::kFormat,
          "unsupported checkpoint version " + std::to_string(version) + " (expected " +
              std::to_string(kCheckpointVersion) + ")");
  const auto input_dim = detail::get<std::uint32_t>(in, "input_dim");
  const auto num_layers = detail::get<std::uint32_t>(in, "layer count");
  require(input_dim > 0 && num_layers > 0 && num_layers < 1024, ErrorCode::kFormat,
          "implausible checkpoint architecture");

  std::vector<LayerBlock> layers(num_layers);
  int in_dim = static_cast<int>(input_dim);
  for (auto& l : layers) {
    const auto out_dim = detail::get<std::uint32_t>(in, "out_dim");
    const auto act = detail::get<std::uint8_t>(in, "activation");
    require(out_dim > 0 && out_dim < (1u << 20), ErrorCode::kFormat, "implausible layer width");
    require(act <= 1, ErrorCode::kFormat, "unknown activation tag");
    l.activation = static_cast<Activation>(act);
    l.weight.resize(out_dim, in_dim);
    l.bias.resize(out_dim);
    l.bn.gamma.resize(out_dim);
    l.bn.beta.resize(out_dim);
    l.bn.running_mean.resize(out_dim);
    l.bn.running_var.resize(out_dim);
    in_dim = static_cast<int>(out_dim);
  }
  for (auto& l : layers) {
    l.bn.eps = detail::get<double>(in, "eps");
    detail::get_array(in, l.weight.data(), static_cast<std::size_t>(l.weight.size()), "weight");
    detail::get_array(in, l.bias.data(), static_cast<std::size_t>(l.bias.size()), "bias");
    detail::get_array(in, l.bn.gamma.data(), static_cast<std::size_t>(l.bn.gamma.size()), "gamma");
    detail::get_array(in, l.bn.beta.data(), static_cast<std::size_t>(l.bn.beta.size()), "beta");
    detail::get_array(in, l.bn.running_mean.data(), static_cast<std::size_t>(l.bn.running_mean.size()), "running_mean");
    detail::get_array(in, l.bn.running_var.data(), static_cast<std::size_t>(l.bn.running_var.size()), "running_var");
  }
  return SmallClassifier(std::move(layers));
}

void save_checkpoint(const SmallClassifier& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  write_checkpoint(model, out);
}

SmallClassifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace tta
