#include "flowforge/arch.hpp"

#include <cmath>

namespace flowforge {

namespace {

LayerSpec conv(std::string name, int k, int s, int c, std::vector<std::string> in) {
  return {std::move(name), LayerOp::Conv, k, s, c, std::move(in)};
}
LayerSpec upconv(std::string name, int c, std::vector<std::string> in) {
  return {std::move(name), LayerOp::Upconv, 4, 2, c, std::move(in)};
}
LayerSpec pred(std::string name, std::vector<std::string> in) {
  return {std::move(name), LayerOp::Predict, 3, 1, 2, std::move(in)};
}

}  // namespace

std::string to_string(UnitKind kind) {
  switch (kind) {
    case UnitKind::S: return "S";
    case UnitKind::SD: return "SD";
    case UnitKind::Fusion: return "Fusion";
  }
  return "?";
}

void UnitSpec::validate() const {
  if (!(channel_multiplier > 0.0 && channel_multiplier <= 1.0)) {
    throw Error(ErrorCode::BadSpec, "channel multiplier must lie in (0,1]");
  }
  if (height < 1 || width < 1) throw Error(ErrorCode::BadSpec, "unit resolution must be positive");
  bool ok = false;
  switch (kind) {
    case UnitKind::S: ok = input_channels == 6 || input_channels == 8 || input_channels == 12; break;
    case UnitKind::SD: ok = input_channels == 6; break;
    case UnitKind::Fusion: ok = input_channels == 11; break;
  }
  if (!ok) {
    throw Error(ErrorCode::BadSpec,
                to_string(kind) + " unit cannot take " + std::to_string(input_channels) + " input channels");
  }
}

int scaled_channels(int base, double multiplier) {
  return std::max(1, static_cast<int>(std::floor(multiplier * base + 0.5)));
}

std::vector<LayerSpec> s_unit_table() {
  return {
      conv("conv1", 7, 2, 64, {"input"}),
      conv("conv2", 5, 2, 128, {"conv1"}),
      conv("conv3", 3, 2, 256, {"conv2"}),
      conv("conv3_1", 3, 1, 256, {"conv3"}),
      conv("conv4", 3, 2, 512, {"conv3_1"}),
      conv("conv4_1", 3, 1, 512, {"conv4"}),
      conv("conv5", 3, 2, 512, {"conv4_1"}),
      conv("conv5_1", 3, 1, 512, {"conv5"}),
      conv("conv6", 3, 2, 1024, {"conv5_1"}),
      conv("conv6_1", 3, 1, 1024, {"conv6"}),
      pred("pr6", {"conv6_1"}),
      upconv("upconv5", 512, {"conv6_1"}),
      pred("pr5", {"upconv5", "pr6", "conv5_1"}),
      upconv("upconv4", 256, {"upconv5", "pr6", "conv5_1"}),
      pred("pr4", {"upconv4", "pr5", "conv4_1"}),
      upconv("upconv3", 128, {"upconv4", "pr5", "conv4_1"}),
      pred("pr3", {"upconv3", "pr4", "conv3_1"}),
      upconv("upconv2", 64, {"upconv3", "pr4", "conv3_1"}),
      pred("pr2", {"upconv2", "pr3", "conv2"}),
  };
}

std::vector<LayerSpec> sd_unit_table() {
  return {
      conv("conv0", 3, 1, 64, {"input"}),
      conv("conv1", 3, 2, 64, {"conv0"}),
      conv("conv1_1", 3, 1, 128, {"conv1"}),
      conv("conv2", 3, 2, 128, {"conv1_1"}),
      conv("conv2_1", 3, 1, 128, {"conv2"}),
      conv("conv3", 3, 2, 256, {"conv2_1"}),
      conv("conv3_1", 3, 1, 256, {"conv3"}),
      conv("conv4", 3, 2, 512, {"conv3_1"}),
      conv("conv4_1", 3, 1, 512, {"conv4"}),
      conv("conv5", 3, 2, 512, {"conv4_1"}),
      conv("conv5_1", 3, 1, 512, {"conv5"}),
      conv("conv6", 3, 2, 1024, {"conv5_1"}),
      conv("conv6_1", 3, 1, 1024, {"conv6"}),
      pred("pr6", {"conv6_1"}),
      upconv("upconv5", 512, {"conv6_1"}),
      conv("rconv5", 3, 1, 512, {"upconv5", "pr6", "conv5_1"}),
      pred("pr5", {"rconv5"}),
      upconv("upconv4", 256, {"rconv5"}),
      conv("rconv4", 3, 1, 256, {"upconv4", "pr5", "conv4_1"}),
      pred("pr4", {"rconv4"}),
      upconv("upconv3", 128, {"rconv4"}),
      conv("rconv3", 3, 1, 128, {"upconv3", "pr4", "conv3_1"}),
      pred("pr3", {"rconv3"}),
      upconv("upconv2", 64, {"rconv3"}),
      conv("rconv2", 3, 1, 64, {"upconv2", "pr3", "conv2_1"}),
      pred("pr2", {"rconv2"}),
  };
}

std::vector<LayerSpec> fusion_unit_table() {
  return {
      conv("conv0", 3, 1, 64, {"input"}),
      conv("conv1", 3, 2, 64, {"conv0"}),
      conv("conv1_1", 3, 1, 128, {"conv1"}),
      conv("conv2", 3, 2, 128, {"conv1_1"}),
      conv("conv2_1", 3, 1, 128, {"conv2"}),
      pred("pr2", {"conv2_1"}),
      upconv("upconv1", 32, {"conv2_1"}),
      conv("rconv1", 3, 1, 32, {"upconv1", "pr2", "conv1_1"}),
      pred("pr1", {"rconv1"}),
      upconv("upconv0", 16, {"rconv1"}),
      conv("rconv0", 3, 1, 16, {"upconv0", "pr1", "conv0"}),
      pred("pr0", {"rconv0"}),
  };
}

Network::Network(UnitSpec spec) : spec_(spec) {
  spec_.validate();
  switch (spec_.kind) {
    case UnitKind::S: layers_ = s_unit_table(); break;
    case UnitKind::SD: layers_ = sd_unit_table(); break;
    case UnitKind::Fusion: layers_ = fusion_unit_table(); break;
  }
  channels_["input"] = spec_.input_channels;
  for (const auto& l : layers_) {
    channels_[l.name] = l.op == LayerOp::Predict ? 2 : scaled_channels(l.base_channels, spec_.channel_multiplier);
    if (l.op == LayerOp::Predict) prediction_names_.push_back(l.name);
  }
}

int Network::out_channels(const LayerSpec& layer) const { return channels_.at(layer.name); }

int Network::input_channels_of(const LayerSpec& layer) const {
  int c = 0;
  for (const auto& in : layer.inputs) c += channels_.at(in);
  return c;
}

std::vector<std::string> Network::prediction_names() const { return prediction_names_; }

std::vector<LayerTrace> Network::trace(int height, int width) const {
  std::map<std::string, std::pair<int, int>> size{{"input", {height, width}}};
  std::vector<LayerTrace> rows;
  for (const auto& l : layers_) {
    LayerTrace t;
    t.name = l.name;
    t.kernel = l.kernel;
    t.stride = l.stride;
    t.inputs = l.inputs;
    t.in_channels = input_channels_of(l);
    t.out_channels = out_channels(l);
    std::tie(t.in_height, t.in_width) = size.at(l.inputs.back());
    const ConvGeometry geo{l.kernel, l.stride, l.op == LayerOp::Upconv ? 1 : l.kernel / 2};
    if (l.op == LayerOp::Upconv) {
      t.out_height = geo.transposed_out_size(t.in_height);
      t.out_width = geo.transposed_out_size(t.in_width);
    } else {
      t.out_height = geo.out_size(t.in_height);
      t.out_width = geo.out_size(t.in_width);
    }
    size[l.name] = {t.out_height, t.out_width};
    rows.push_back(std::move(t));
  }
  return rows;
}

std::int64_t Network::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& l : layers_) {
    const std::int64_t out = out_channels(l);
    n += static_cast<std::int64_t>(l.kernel) * l.kernel * input_channels_of(l) * out + out;
  }
  return n;
}

}  // namespace flowforge
