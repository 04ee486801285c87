#include "flowforge/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "flowforge/flo_io.hpp"
#include "flowforge/image_io.hpp"
#include "flowforge/rng.hpp"
#include "flowforge/warp.hpp"

namespace flowforge {

namespace {

constexpr double kPi = std::numbers::pi;

double hash01(std::uint64_t seed, std::int64_t ix, std::int64_t iy, int c) {
  const std::uint64_t key = static_cast<std::uint64_t>(ix) * 0x9E3779B185EBCA87ull ^
                            static_cast<std::uint64_t>(iy) * 0xC2B2AE3D27D4EB4Full ^ static_cast<std::uint64_t>(c);
  return static_cast<double>(mix64(seed, key) >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::BadParams, "invalid number for '" + key + "': " + value);
  }
}

}  // namespace

double DisplacementDist::effective_cap(int height, int width) const {
  return cap > 0.0 ? cap : 0.3 * std::min(height, width);
}

double DisplacementDist::cdf(double x, int height, int width) const {
  const double limit = effective_cap(height, width);
  if (x >= limit) return 1.0;
  if (kind == Kind::Uniform) return std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
  if (x <= 0.0) return 0.0;
  return 0.5 * std::erfc(-(std::log(x) - std::log(median)) / (sigma_log * std::numbers::sqrt2));
}

void SceneParams::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::BadParams, what); };
  if (height < 2 || width < 2) fail("image size must be at least 2x2");
  if (min_objects < 0 || max_objects < min_objects) fail("object count range is invalid");
  double total = 0.0;
  for (double w : background_weights) {
    if (w < 0.0) fail("background weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) fail("background weights must sum to 1");
  if (polygon_fraction < 0.0 || polygon_fraction > 1.0) fail("polygon_fraction must lie in [0,1]");
  if (!(min_radius > 0.0) || max_radius < min_radius) fail("radius range is invalid");
  if (displacement.kind == DisplacementDist::Kind::LogNormal) {
    if (!(displacement.median > 0.0) || displacement.sigma_log < 0.0) fail("log-normal parameters are invalid");
  } else if (displacement.lo < 0.0 || !(displacement.hi > displacement.lo)) {
    fail("uniform displacement bounds are invalid");
  }
  if (displacement.cap < 0.0) fail("displacement cap must be non-negative");
  if (max_rotation_deg < 0.0 || max_rotation_deg > 90.0) fail("max_rotation_deg must lie in [0,90]");
  if (max_scale_change < 0.0 || max_scale_change >= 0.5) fail("max_scale_change must lie in [0,0.5)");
  if (brightness_perturbation < 0.0 || brightness_perturbation >= 0.5) {
    fail("brightness_perturbation must lie in [0,0.5)");
  }
  if (!(texture_cell > 0.0)) fail("texture_cell must be positive");
  if (!(photometric_tolerance > 0.0)) fail("photometric_tolerance must be positive");
}

std::vector<std::string> SceneParams::to_lines() const {
  return {
      "height=" + std::to_string(height),
      "width=" + std::to_string(width),
      "min_objects=" + std::to_string(min_objects),
      "max_objects=" + std::to_string(max_objects),
      std::string("displacement=") + (displacement.kind == DisplacementDist::Kind::LogNormal ? "lognormal" : "uniform"),
      "disp_median=" + fmt(displacement.median),
      "disp_sigma_log=" + fmt(displacement.sigma_log),
      "disp_lo=" + fmt(displacement.lo),
      "disp_hi=" + fmt(displacement.hi),
      "disp_cap=" + fmt(displacement.cap),
      "bg_textured=" + fmt(background_weights[0]),
      "bg_homogeneous=" + fmt(background_weights[1]),
      "bg_gradient=" + fmt(background_weights[2]),
      "polygon_fraction=" + fmt(polygon_fraction),
      "min_radius=" + fmt(min_radius),
      "max_radius=" + fmt(max_radius),
      "max_rotation_deg=" + fmt(max_rotation_deg),
      "max_scale_change=" + fmt(max_scale_change),
      "brightness_perturbation=" + fmt(brightness_perturbation),
      "texture_cell=" + fmt(texture_cell),
      "photometric_tolerance=" + fmt(photometric_tolerance),
      "seed=" + std::to_string(seed),
  };
}

SceneParams parse_scene_params(const std::vector<std::pair<std::string, std::string>>& entries, SceneParams p) {
  for (const auto& [key, value] : entries) {
    auto num = [&] { return parse_double(key, value); };
    auto integer = [&] {
      const double v = num();
      if (v != std::floor(v)) throw Error(ErrorCode::BadParams, "'" + key + "' must be an integer");
      return static_cast<int>(v);
    };
    if (key == "height") p.height = integer();
    else if (key == "width") p.width = integer();
    else if (key == "min_objects") p.min_objects = integer();
    else if (key == "max_objects") p.max_objects = integer();
    else if (key == "displacement") {
      if (value == "lognormal") p.displacement.kind = DisplacementDist::Kind::LogNormal;
      else if (value == "uniform") p.displacement.kind = DisplacementDist::Kind::Uniform;
      else throw Error(ErrorCode::BadParams, "unknown displacement distribution '" + value + "'");
    }
    else if (key == "disp_median") p.displacement.median = num();
    else if (key == "disp_sigma_log") p.displacement.sigma_log = num();
    else if (key == "disp_lo") p.displacement.lo = num();
    else if (key == "disp_hi") p.displacement.hi = num();
    else if (key == "disp_cap") p.displacement.cap = num();
    else if (key == "bg_textured") p.background_weights[0] = num();
    else if (key == "bg_homogeneous") p.background_weights[1] = num();
    else if (key == "bg_gradient") p.background_weights[2] = num();
    else if (key == "polygon_fraction") p.polygon_fraction = num();
    else if (key == "min_radius") p.min_radius = num();
    else if (key == "max_radius") p.max_radius = num();
    else if (key == "max_rotation_deg") p.max_rotation_deg = num();
    else if (key == "max_scale_change") p.max_scale_change = num();
    else if (key == "brightness_perturbation") p.brightness_perturbation = num();
    else if (key == "texture_cell") p.texture_cell = num();
    else if (key == "photometric_tolerance") p.photometric_tolerance = num();
    else if (key == "seed") p.seed = std::stoull(value);
    else throw Error(ErrorCode::BadParams, "unknown scene parameter '" + key + "'");
  }
  return p;
}

SceneParams scene_preset(const std::string& name, int height, int width, std::uint64_t seed) {
  SceneParams base;
  base.height = height;
  base.width = width;
  base.seed = seed;
  if (name == "sdhom") {
    // More objects per frame than the curriculum sets so a few hundred
    // samples pin down the displacement distribution.
    base.min_objects = 2;
    base.max_objects = 6;
    return base;
  }
  // dense, finely textured sprites with moderate uniform motion; sparse
  // coarse scenes leave too few moving pixels for a small net to learn from
  base.min_objects = 3;
  base.max_objects = 6;
  base.min_radius = 0.4;
  base.max_radius = 0.7;
  base.texture_cell = 4.0;
  base.displacement.kind = DisplacementDist::Kind::Uniform;
  base.displacement.lo = 0.25;
  base.displacement.hi = 1.0;
  auto [simple, complex] = curriculum_pair(base);
  if (name == "simple") return simple;
  if (name == "complex") return complex;
  throw Error(ErrorCode::BadParams, "unknown preset '" + name + "' (expected sdhom, simple or complex)");
}

std::pair<SceneParams, SceneParams> curriculum_pair(const SceneParams& base) {
  base.validate();
  SceneParams simple = base;
  simple.displacement.median = base.displacement.median * 2.0;
  simple.displacement.lo = base.displacement.lo * 2.0;
  simple.displacement.hi = base.displacement.hi * 2.0;
  simple.background_weights = {1.0, 0.0, 0.0};
  simple.max_rotation_deg = 0.0;
  simple.max_scale_change = 0.0;
  simple.brightness_perturbation = 0.0;
  simple.seed = mix64(base.seed, 1);

  SceneParams complex = base;
  complex.background_weights = {0.2, 0.4, 0.4};
  complex.max_rotation_deg = 10.0;
  complex.max_scale_change = 0.1;
  complex.brightness_perturbation = 0.05;
  complex.seed = mix64(base.seed, 2);
  return {simple, complex};
}

std::array<double, 2> RigidMotion::apply(double x, double y) const {
  const double dx = x - cx;
  const double dy = y - cy;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {cx + scale * (c * dx - s * dy) + tx, cy + scale * (s * dx + c * dy) + ty};
}

std::array<double, 2> RigidMotion::inverse(double x, double y) const {
  const double dx = x - cx - tx;
  const double dy = y - cy - ty;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {cx + (c * dx + s * dy) / scale, cy + (-s * dx + c * dy) / scale};
}

std::array<double, 3> Texture::at(double x, double y) const {
  const double gx = x / cell;
  const double gy = y / cell;
  const double fx = std::floor(gx);
  const double fy = std::floor(gy);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const double sx = smoothstep(gx - fx);
  const double sy = smoothstep(gy - fy);
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    if (amplitude[c] == 0.0) {
      out[c] = base[c];
      continue;
    }
    const double v00 = hash01(seed, ix, iy, c);
    const double v10 = hash01(seed, ix + 1, iy, c);
    const double v01 = hash01(seed, ix, iy + 1, c);
    const double v11 = hash01(seed, ix + 1, iy + 1, c);
    const double top = v00 + sx * (v10 - v00);
    const double bottom = v01 + sx * (v11 - v01);
    out[c] = base[c] + amplitude[c] * (top + sy * (bottom - top) - 0.5);
  }
  return out;
}

bool SceneObject::contains(double x, double y) const {
  const double dx = x - motion.cx;
  const double dy = y - motion.cy;
  if (shape == ShapeKind::Ellipse) {
    const double c = std::cos(orientation);
    const double s = std::sin(orientation);
    const double a = (c * dx + s * dy) / axis_a;
    const double b = (-s * dx + c * dy) / axis_b;
    return a * a + b * b <= 1.0;
  }
  // Even-odd crossing test.
  bool inside = false;
  const std::size_t n = vertices.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& vi = vertices[i];
    const auto& vj = vertices[j];
    if ((vi[1] > dy) != (vj[1] > dy)) {
      const double cross_x = vj[0] + (dy - vj[1]) * (vi[0] - vj[0]) / (vi[1] - vj[1]);
      if (dx < cross_x) inside = !inside;
    }
  }
  return inside;
}

std::array<double, 3> Scene::background_at(double x, double y) const {
  auto color = background_texture.at(x, y);
  if (background == BackgroundKind::Gradient) {
    for (int c = 0; c < 3; ++c) {
      color[c] += gradient_x[c] * x / std::max(1, width - 1) + gradient_y[c] * y / std::max(1, height - 1);
    }
  }
  return color;
}

Scene build_scene(const SceneParams& params, std::uint64_t index) {
  params.validate();
  Rng rng(mix64(params.seed, index));
  Scene scene;
  scene.height = params.height;
  scene.width = params.width;

  const double pick = rng.uniform();
  const auto& bw = params.background_weights;
  scene.background = pick < bw[0]                ? BackgroundKind::Textured
                     : pick < bw[0] + bw[1]      ? BackgroundKind::Homogeneous
                                                 : BackgroundKind::Gradient;
  if (bw[2] == 0.0 && scene.background == BackgroundKind::Gradient) {
    scene.background = bw[1] > 0.0 ? BackgroundKind::Homogeneous : BackgroundKind::Textured;
  }
  auto& bg = scene.background_texture;
  bg.seed = rng.next();
  bg.cell = params.texture_cell;
  for (int c = 0; c < 3; ++c) {
    bg.base[c] = rng.uniform(0.3, 0.7);
    const double amp = rng.uniform(0.3, 0.5);
    const double gx = rng.uniform(-0.1, 0.1);
    const double gy = rng.uniform(-0.1, 0.1);
    if (scene.background == BackgroundKind::Textured) bg.amplitude[c] = amp;
    if (scene.background == BackgroundKind::Gradient) {
      scene.gradient_x[c] = gx;
      scene.gradient_y[c] = gy;
    }
  }

  const double min_dim = std::min(params.height, params.width);
  const double cap = params.displacement.effective_cap(params.height, params.width);
  const int count = rng.between(params.min_objects, params.max_objects);
  for (int k = 0; k < count; ++k) {
    SceneObject obj;
    const double radius = rng.uniform(params.min_radius, params.max_radius) * min_dim;
    obj.motion.cx = rng.uniform(0.0, params.width - 1);
    obj.motion.cy = rng.uniform(0.0, params.height - 1);

    if (rng.uniform() < params.polygon_fraction) {
      obj.shape = ShapeKind::Polygon;
      const int nv = rng.between(5, 9);
      const double step = 2.0 * kPi / nv;
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      for (int i = 0; i < nv; ++i) {
        const double a = phase + step * (i + rng.uniform(-0.3, 0.3));
        const double r = radius * rng.uniform(0.6, 1.0);
        obj.vertices.push_back({r * std::cos(a), r * std::sin(a)});
      }
    } else {
      obj.shape = ShapeKind::Ellipse;
      obj.axis_a = radius * rng.uniform(0.5, 1.0);
      obj.axis_b = radius * rng.uniform(0.5, 1.0);
      obj.orientation = rng.uniform(0.0, kPi);
    }

    double d = 0.0;
    if (params.displacement.kind == DisplacementDist::Kind::LogNormal) {
      d = params.displacement.median * std::exp(params.displacement.sigma_log * rng.normal());
    } else {
      d = rng.uniform(params.displacement.lo, params.displacement.hi);
    }
    d = std::min(d, cap);
    const double direction = rng.uniform(0.0, 2.0 * kPi);
    obj.motion.tx = d * std::cos(direction);
    obj.motion.ty = d * std::sin(direction);
    // Rotation and scaling are bounded so that they move the object rim by
    // at most half the translation; the mean displacement stays near d.
    const double rot_limit = std::min(params.max_rotation_deg * kPi / 180.0, 0.5 * d / radius);
    const double scale_limit = std::min(params.max_scale_change, 0.5 * d / radius);
    obj.motion.angle = rng.uniform(-1.0, 1.0) * rot_limit;
    obj.motion.scale = 1.0 + rng.uniform(-1.0, 1.0) * scale_limit;

    obj.texture.seed = rng.next();
    obj.texture.cell = params.texture_cell;
    for (int c = 0; c < 3; ++c) {
      obj.texture.base[c] = rng.uniform(0.25, 0.75);
      obj.texture.amplitude[c] = rng.uniform(0.2, 0.5);
    }
    obj.gain = 1.0 + rng.uniform(-1.0, 1.0) * params.brightness_perturbation;
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

SampleRecord render_scene(const Scene& scene) {
  const int h = scene.height;
  const int w = scene.width;
  const int n = static_cast<int>(scene.objects.size());
  SampleRecord rec{0, Gridf(h, w, 3), Gridf(h, w, 3), FlowFieldf(h, w), Gridf(h, w, 1)};
  std::vector<int> surface1(static_cast<std::size_t>(h) * w, 0);
  std::vector<int> surface2(static_cast<std::size_t>(h) * w, 0);
  auto put = [](Gridf& img, int y, int x, const std::array<double, 3>& col, double gain) {
    for (int c = 0; c < 3; ++c) img(y, x, c) = static_cast<float>(std::clamp(gain * col[c], 0.0, 1.0));
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto idx = static_cast<std::size_t>(y) * w + x;
      int top = -1;
      for (int k = n - 1; k >= 0; --k) {
        if (scene.objects[k].contains(x, y)) {
          top = k;
          break;
        }
      }
      if (top < 0) {
        put(rec.i1, y, x, scene.background_at(x, y), 1.0);
      } else {
        const auto& obj = scene.objects[top];
        put(rec.i1, y, x, obj.texture.at(x - obj.motion.cx, y - obj.motion.cy), 1.0);
        const auto target = obj.motion.apply(x, y);
        rec.flow.u(y, x) = static_cast<float>(target[0] - x);
        rec.flow.v(y, x) = static_cast<float>(target[1] - y);
        surface1[idx] = top + 1;
      }

      int top2 = -1;
      std::array<double, 2> source{};
      for (int k = n - 1; k >= 0; --k) {
        source = scene.objects[k].motion.inverse(x, y);
        if (scene.objects[k].contains(source[0], source[1])) {
          top2 = k;
          break;
        }
      }
      if (top2 < 0) {
        put(rec.i2, y, x, scene.background_at(x, y), 1.0);
      } else {
        const auto& obj = scene.objects[top2];
        put(rec.i2, y, x, obj.texture.at(source[0] - obj.motion.cx, source[1] - obj.motion.cy), obj.gain);
        surface2[idx] = top2 + 1;
      }
    }
  }

  const ValidRegion region{h, w};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Same arithmetic as warp_forward so both agree on the valid region.
      const float p = static_cast<float>(x) + rec.flow.u(y, x);
      const float q = static_cast<float>(y) + rec.flow.v(y, x);
      if (!region.contains(p, q)) continue;
      const auto s = sample_coeffs(p, q, w, h);
      const int want = surface1[static_cast<std::size_t>(y) * w + x];
      const std::array<std::array<int, 2>, 4> taps{{{s.floor_y, s.floor_x},
                                                    {s.floor_y, s.ceil_x},
                                                    {s.ceil_y, s.floor_x},
                                                    {s.ceil_y, s.ceil_x}}};
      const std::array<float, 4> weights{s.theta_x_bar * s.theta_y_bar, s.theta_x * s.theta_y_bar,
                                         s.theta_x_bar * s.theta_y, s.theta_x * s.theta_y};
      bool same = true;
      for (int t = 0; t < 4; ++t) {
        if (weights[t] > 0.0f && surface2[static_cast<std::size_t>(taps[t][0]) * w + taps[t][1]] != want) same = false;
      }
      rec.visibility(y, x) = same ? 1.0f : 0.0f;
    }
  }
  return rec;
}

double photometric_error(const SampleRecord& record) {
  const auto warped = warp_forward(record.i2, record.flow).warped;
  double sum = 0.0;
  std::int64_t count = 0;
  for (int y = 0; y < record.i1.height(); ++y) {
    for (int x = 0; x < record.i1.width(); ++x) {
      if (record.visibility(y, x) == 0.0f) continue;
      double e = 0.0;
      for (int c = 0; c < record.i1.channels(); ++c) e += std::abs(warped(y, x, c) - record.i1(y, x, c));
      sum += e / record.i1.channels();
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

SampleRecord generate_sample(const SceneParams& params, std::uint64_t index) {
  SampleRecord rec = render_scene(build_scene(params, index));
  rec.index = index;
  const double err = photometric_error(rec);
  const double limit = params.photometric_tolerance + params.brightness_perturbation;
  if (err >= limit) {
    throw Error(ErrorCode::BadParams, "photometric self-check failed for sample " + std::to_string(index) +
                                          ": mean error " + fmt(err) + " >= " + fmt(limit));
  }
  return rec;
}

namespace {

std::string record_name(std::uint64_t index, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%06llu_%s", static_cast<unsigned long long>(index), suffix);
  return buf;
}

}  // namespace

Manifest generate_dataset(const SceneParams& params, std::size_t count, const std::filesystem::path& out_dir) {
  params.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

  Manifest manifest{params, {}};
  for (std::size_t i = 0; i < count; ++i) {
    const SampleRecord rec = generate_sample(params, i);
    ManifestEntry e{i, record_name(i, "i1.ppm"), record_name(i, "i2.ppm"), record_name(i, "flow.flo"),
                    record_name(i, "vis.pgm")};
    save_pnm(out_dir / e.i1, rec.i1);
    save_pnm(out_dir / e.i2, rec.i2);
    save_flo(out_dir / e.flow, rec.flow);
    save_pnm(out_dir / e.visibility, rec.visibility);
    manifest.entries.push_back(std::move(e));
  }

  std::ostringstream text;
  text << "# flowforge dataset manifest v1\n";
  for (const auto& line : params.to_lines()) text << "# " << line << "\n";
  for (const auto& e : manifest.entries) {
    text << e.index << '\t' << e.i1 << '\t' << e.i2 << '\t' << e.flow << '\t' << e.visibility << '\n';
  }
  const std::string s = text.str();
  write_file(out_dir / kManifestName, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  return manifest;
}

Manifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw Error(ErrorCode::IoError, "no manifest in " + dir.string());
  std::vector<std::pair<std::string, std::string>> kv;
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      kv.emplace_back(key, line.substr(eq + 1));
      continue;
    }
    std::istringstream fields(line);
    ManifestEntry e;
    if (!(fields >> e.index >> e.i1 >> e.i2 >> e.flow >> e.visibility)) {
      throw Error(ErrorCode::IoError, "malformed manifest line: " + line);
    }
    m.entries.push_back(std::move(e));
  }
  m.params = parse_scene_params(kv);
  return m;
}

std::vector<SampleRecord> load_dataset(const std::filesystem::path& dir) {
  const Manifest m = read_manifest(dir);
  std::vector<SampleRecord> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    SampleRecord r;
    r.index = e.index;
    r.i1 = load_pnm(dir / e.i1);
    r.i2 = load_pnm(dir / e.i2);
    r.flow = load_flo(dir / e.flow);
    r.visibility = load_pnm(dir / e.visibility);
    out.push_back(std::move(r));
  }
  return out;
}

bool is_validation_index(std::uint64_t index) { return mix64(index, 0x5EEDull) % 10 == 0; }

}  // namespace flowforge
