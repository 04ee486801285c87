#ifndef FLOWFORGE_DATAGEN_HPP
#define FLOWFORGE_DATAGEN_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "flowforge/grid.hpp"

namespace flowforge {

enum class BackgroundKind { Textured = 0, Homogeneous = 1, Gradient = 2 };
enum class ShapeKind { Polygon, Ellipse };

/// Distribution of per-object displacement magnitudes in pixels.
struct DisplacementDist {
  enum class Kind { LogNormal, Uniform };
  Kind kind = Kind::LogNormal;
  double median = 0.4;     // log-normal median
  double sigma_log = 1.0;  // log-normal shape
  double lo = 0.0;         // uniform bounds
  double hi = 1.0;
  double cap = 0.0;        // upper clamp; 0 selects 0.3 * min(H, W)

  double effective_cap(int height, int width) const;
  /// CDF of the capped distribution.
  double cdf(double x, int height, int width) const;
};

struct SceneParams {
  int height = 48;
  int width = 64;
  int min_objects = 1;
  int max_objects = 4;
  DisplacementDist displacement;
  /// Mixture weights indexed by BackgroundKind.
  std::array<double, 3> background_weights{0.0, 0.5, 0.5};
  double polygon_fraction = 0.5;
  /// Object radius range as a fraction of min(H, W).
  double min_radius = 0.12;
  double max_radius = 0.3;
  double max_rotation_deg = 0.0;
  double max_scale_change = 0.0;
  /// Per-object gain perturbation between frames, I2 = (1 + g) * I1, |g| <= this.
  double brightness_perturbation = 0.0;
  /// Texture lattice spacing in pixels.
  double texture_cell = 8.0;
  /// Bound on the mean photometric error of the generator self-check, on top
  /// of brightness_perturbation.
  double photometric_tolerance = 0.02;
  std::uint64_t seed = 1;

  void validate() const;
  /// key=value lines, parseable by parse_scene_params.
  std::vector<std::string> to_lines() const;
};

SceneParams parse_scene_params(const std::vector<std::pair<std::string, std::string>>& entries, SceneParams base = {});

/// Named presets: "sdhom" (sub-pixel dominant, homogeneous/gradient
/// backgrounds), "simple" and "complex" (the curriculum pair).
SceneParams scene_preset(const std::string& name, int height = 48, int width = 64, std::uint64_t seed = 1);

/// A rigid 2D motion about `center`: p -> center + scale * R(angle) * (p - center) + translation.
struct RigidMotion {
  double cx = 0.0, cy = 0.0;
  double tx = 0.0, ty = 0.0;
  double angle = 0.0;
  double scale = 1.0;

  std::array<double, 2> apply(double x, double y) const;
  std::array<double, 2> inverse(double x, double y) const;
};

/// Smooth value-noise texture: base + amplitude * (noise - 0.5) per channel.
struct Texture {
  std::uint64_t seed = 0;
  double cell = 8.0;
  std::array<double, 3> base{0.5, 0.5, 0.5};
  std::array<double, 3> amplitude{0.0, 0.0, 0.0};

  std::array<double, 3> at(double x, double y) const;
};

struct SceneObject {
  ShapeKind shape = ShapeKind::Polygon;
  /// Polygon vertices relative to the motion center (I1 coordinates).
  std::vector<std::array<double, 2>> vertices;
  /// Ellipse semi-axes and orientation.
  double axis_a = 1.0, axis_b = 1.0, orientation = 0.0;
  RigidMotion motion;
  /// Texture in object-local coordinates, so it moves with the object.
  Texture texture;
  double gain = 1.0;

  /// Whether the I1-frame point (x, y) lies inside the object.
  bool contains(double x, double y) const;
};

struct Scene {
  int height = 0;
  int width = 0;
  BackgroundKind background = BackgroundKind::Textured;
  /// Base color and, for textured backgrounds, the noise texture.
  Texture background_texture;
  /// Total color change across the frame for gradient backgrounds.
  std::array<double, 3> gradient_x{0.0, 0.0, 0.0};
  std::array<double, 3> gradient_y{0.0, 0.0, 0.0};
  /// Back to front.
  std::vector<SceneObject> objects;

  std::array<double, 3> background_at(double x, double y) const;
};

struct SampleRecord {
  std::uint64_t index = 0;
  Gridf i1;
  Gridf i2;
  FlowFieldf flow;
  /// 1 where the I1 pixel is visible in I2 and its bilinear footprint there
  /// lies on the same surface.
  Gridf visibility;
};

/// Deterministic scene description for (params.seed, index).
Scene build_scene(const SceneParams& params, std::uint64_t index);

/// Rasterizes both frames, exact flow and visibility.
SampleRecord render_scene(const Scene& scene);

/// Mean over visibility=1 pixels of the channel-mean |I2(x + w(x)) - I1(x)|.
/// Returns 0 when no pixel is visible.
double photometric_error(const SampleRecord& record);

/// build_scene + render_scene + self-check; throws BadParams if the
/// photometric self-check fails.
SampleRecord generate_sample(const SceneParams& params, std::uint64_t index);

/// Returns the simple and complex members of the curriculum pair.
std::pair<SceneParams, SceneParams> curriculum_pair(const SceneParams& base);

struct ManifestEntry {
  std::uint64_t index = 0;
  std::string i1, i2, flow, visibility;
};

struct Manifest {
  SceneParams params;
  std::vector<ManifestEntry> entries;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Writes i1/i2 (PPM), flow (.flo) and visibility (PGM) per record plus
/// manifest.txt. Throws IoError.
Manifest generate_dataset(const SceneParams& params, std::size_t count, const std::filesystem::path& out_dir);

Manifest read_manifest(const std::filesystem::path& dir);
std::vector<SampleRecord> load_dataset(const std::filesystem::path& dir);

/// Deterministic 10% hold-out split by index hash.
bool is_validation_index(std::uint64_t index);

}  // namespace flowforge

#endif  // FLOWFORGE_DATAGEN_HPP
