#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "goal/data.hpp"
#include "goal/errors.hpp"
#include "goal/serialize.hpp"
#include "test_util.hpp"

namespace goal {
namespace {

// Training code receives a TrainingView; it must not be able to name target
// ground truth at all.
template <class T>
concept HasTruthField = requires(const T& v) { v.y_target_true; };
template <class T>
concept HasTruthGetter = requires(const T& v) { v.y_target_true(); };
template <class T>
concept HasTargetLabels = requires(const T& v) { v.y_target(); };
static_assert(!HasTruthField<TrainingView>);
static_assert(!HasTruthGetter<TrainingView>);
static_assert(!HasTargetLabels<TrainingView>);
static_assert(HasTruthField<DatasetBundle>);

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("goal_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

TEST(Synthetic, IdentityShiftWithoutNoiseReplicatesCenters) {
  SyntheticSpec s;
  s.rotation_rad = 0.0;
  s.translation = 0.0;
  s.scaling = 1.0;
  s.noise = 0.0;
  s.per_class = 4;
  const DatasetBundle b = generate_synthetic(s);
  EXPECT_EQ(b.x_source, b.x_target);
  // Every sample of a class sits on the same center.
  for (std::size_t j = 1; j < 4; ++j) {
    for (std::size_t r = 0; r < b.ambient_dim(); ++r) EXPECT_EQ(b.x_source(r, j), b.x_source(r, 0));
  }
}

TEST(Synthetic, DeterministicPerSeed) {
  SyntheticSpec s;
  s.seed = 11;
  const DatasetBundle a = generate_synthetic(s);
  const DatasetBundle b = generate_synthetic(s);
  EXPECT_EQ(a.x_source, b.x_source);
  EXPECT_EQ(a.x_target, b.x_target);
  EXPECT_EQ(a.y_source, b.y_source);
  s.seed = 12;
  EXPECT_FALSE(generate_synthetic(s).x_source == a.x_source);
}

TEST(Synthetic, ShapesAndLabels) {
  const DatasetBundle b = generate_synthetic(SyntheticSpec{});
  EXPECT_EQ(b.ambient_dim(), 20u);
  EXPECT_EQ(b.x_source.cols(), 300u);
  EXPECT_EQ(b.x_target.cols(), 300u);
  ASSERT_TRUE(b.y_target_true.has_value());
  EXPECT_EQ(std::set<int>(b.y_source.begin(), b.y_source.end()), (std::set<int>{0, 1, 2}));
  EXPECT_NO_THROW(b.validate());
}

std::vector<int> nearest_centroid(const Mat& centroids, const Mat& x) {
  std::vector<int> out(x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.cols(); ++c) {
      double d2 = 0.0;
      for (std::size_t r = 0; r < x.rows(); ++r) d2 += std::pow(x(r, j) - centroids(r, c), 2);
      if (d2 < best) {
        best = d2;
        out[j] = static_cast<int>(c);
      }
    }
  }
  return out;
}

double accuracy(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t hit = 0;
  for (std::size_t j = 0; j < a.size(); ++j) hit += a[j] == b[j];
  return static_cast<double>(hit) / static_cast<double>(a.size());
}

Mat class_means(const Mat& x, const std::vector<int>& y, std::size_t k, std::size_t per_class) {
  Mat m(x.rows(), k);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    for (std::size_t r = 0; r < x.rows(); ++r) m(r, y[j]) += x(r, j) / static_cast<double>(per_class);
  }
  return m;
}

TEST(Synthetic, ShiftMovesClassMeans) {
  SyntheticSpec s;
  s.noise = 0.3;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    s.seed = seed;
    s.rotation_rad = 1.0;
    s.translation = 0.5;
    DatasetBundle b = generate_synthetic(s);
    Mat src = class_means(b.x_source, b.y_source, b.k, s.per_class);
    Mat tgt = class_means(b.x_target, *b.y_target_true, b.k, s.per_class);
    // Source classes stay separable by their own means.
    EXPECT_EQ(accuracy(nearest_centroid(src, b.x_source), b.y_source), 1.0);
    // The translation alone moves every class mean by 0.5·center_scale.
    for (std::size_t c = 0; c < b.k; ++c) {
      EXPECT_GT(frobenius_norm(src.select_cols(std::vector<std::size_t>{c}) -
                               tgt.select_cols(std::vector<std::size_t>{c})),
                1.0)
          << "seed " << seed << " class " << c;
    }
    s.rotation_rad = 0.0;
    s.translation = 0.0;
    b = generate_synthetic(s);
    src = class_means(b.x_source, b.y_source, b.k, s.per_class);
    tgt = class_means(b.x_target, *b.y_target_true, b.k, s.per_class);
    for (std::size_t c = 0; c < b.k; ++c) {
      EXPECT_LT(frobenius_norm(src.select_cols(std::vector<std::size_t>{c}) -
                               tgt.select_cols(std::vector<std::size_t>{c})),
                0.5)
          << "seed " << seed << " class " << c;
    }
  }
}

TEST(Synthetic, RejectsBadSpecs) {
  SyntheticSpec s;
  s.k = 0;
  EXPECT_THROW(generate_synthetic(s), SpecError);
  s = {};
  s.noise = -1.0;
  EXPECT_THROW(generate_synthetic(s), SpecError);
  s = {};
  s.rotation_rad = 4.0;
  EXPECT_THROW(generate_synthetic(s), SpecError);
}

TEST(BundleIo, RoundTripIsExact) {
  TempDir dir("roundtrip");
  SyntheticSpec s;
  s.per_class = 7;
  const DatasetBundle b = generate_synthetic(s);
  save_bundle(b, dir.path());
  const DatasetBundle c = load_bundle(dir.path());
  EXPECT_EQ(c.x_source, b.x_source);
  EXPECT_EQ(c.x_target, b.x_target);
  EXPECT_EQ(c.y_source, b.y_source);
  EXPECT_EQ(c.y_target_true, b.y_target_true);
  EXPECT_EQ(c.k, b.k);
  ASSERT_TRUE(c.spec.has_value());
  EXPECT_EQ(nlohmann::json(*c.spec), nlohmann::json(s));
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

void write_fixture(const std::filesystem::path& dir, int k) {
  write(dir / "manifest.json",
        R"({"format": "goal-dataset", "version": 1, "k": )" + std::to_string(k) +
            R"(, "D": 2, "n_source": 4, "n_target": 2, "has_target_labels": false})");
  write(dir / "x_source.csv", "f0,f1\n1.5,-2\n0,0.25\n3,4\n-1,1e-3\n");
  write(dir / "y_source.csv", "label\n0\n1\n1\n0\n");
  write(dir / "x_target.csv", "f0,f1\n7,8\n9,10\n");
}

TEST(BundleIo, HandWrittenFixture) {
  TempDir dir("fixture");
  write_fixture(dir.path(), 2);
  const DatasetBundle b = load_bundle(dir.path());
  EXPECT_EQ(b.x_source, Mat::from_rows({{1.5, 0.0, 3.0, -1.0}, {-2.0, 0.25, 4.0, 1e-3}}));
  EXPECT_EQ(b.y_source, (std::vector<int>{0, 1, 1, 0}));
  EXPECT_EQ(b.x_target, Mat::from_rows({{7, 9}, {8, 10}}));
  EXPECT_FALSE(b.y_target_true.has_value());
}

TEST(BundleIo, ManifestKDisagreeingWithLabelsIsAParseError) {
  TempDir dir("badk");
  write_fixture(dir.path(), 3);
  EXPECT_THROW(load_bundle(dir.path()), ParseError);
}

TEST(BundleIo, CorruptFilesAreParseErrors) {
  TempDir dir("corrupt");
  write_fixture(dir.path(), 2);
  write(dir.path() / "x_source.csv", "f0,f1\n1.5,abc\n0,0.25\n3,4\n-1,1\n");
  EXPECT_THROW(load_bundle(dir.path()), ParseError);
  write_fixture(dir.path(), 2);
  write(dir.path() / "x_source.csv", "f0,f1\n1.5\n0,0.25\n3,4\n-1,1\n");
  EXPECT_THROW(load_bundle(dir.path()), ParseError);
  write_fixture(dir.path(), 2);
  write(dir.path() / "manifest.json", "{not json");
  EXPECT_THROW(load_bundle(dir.path()), ParseError);
  EXPECT_THROW(load_bundle(dir.path() / "nowhere"), ParseError);
}

DatasetBundle small_bundle() {
  SyntheticSpec s;
  s.per_class = 10;
  return generate_synthetic(s);
}

TEST(AssembleBatch, EmptyMaskLeavesTargetUnlabeled) {
  const DatasetBundle b = small_bundle();
  const auto view = b.training_view();
  const std::vector<int> pl(30, 0);
  const AssembledBatch ab = assemble_batch(view, pl, std::vector<bool>(30, false));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(ab.batch.class_domain_cols(i, Domain::target).empty());
    EXPECT_EQ(ab.batch.class_domain_cols(i, Domain::source).size(), 10u);
  }
  EXPECT_EQ(ab.batch.unlabeled_cols().size(), 30u);
  EXPECT_EQ(ab.batch.size(), 60u);
}

TEST(AssembleBatch, FullCorrectMaskGivesClassCounts) {
  const DatasetBundle b = small_bundle();
  const AssembledBatch ab =
      assemble_batch(b.training_view(), *b.y_target_true, std::vector<bool>(30, true));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(ab.batch.class_cols(i).size(), 20u);
    EXPECT_EQ(ab.batch.class_domain_cols(i, Domain::target).size(), 10u);
  }
  EXPECT_TRUE(ab.batch.unlabeled_cols().empty());
}

TEST(AssembleBatch, EveryIndexAppearsExactlyOnce) {
  const DatasetBundle b = small_bundle();
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> pl(30);
    std::vector<bool> mask(30);
    for (std::size_t j = 0; j < 30; ++j) {
      pl[j] = static_cast<int>(rng() % 3);
      mask[j] = rng() % 2 == 0;
    }
    const AssembledBatch ab = assemble_batch(b.training_view(), pl, mask);
    std::vector<int> count(ab.batch.size(), 0);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j : ab.batch.class_cols(i)) ++count[j];
    }
    for (std::size_t j : ab.batch.unlabeled_cols()) ++count[j];
    for (int c : count) EXPECT_EQ(c, 1);
    // Origins map each column back to its sample and label.
    for (std::size_t j = 0; j < ab.batch.size(); ++j) {
      const bool src = ab.batch.domains()[j] == Domain::source;
      const std::size_t o = ab.origin[j];
      const Mat& x = src ? b.x_source : b.x_target;
      for (std::size_t r = 0; r < x.rows(); ++r) EXPECT_EQ(ab.batch.z()(r, j), x(r, o));
      const int expect = src ? b.y_source[o] : (mask[o] ? pl[o] : kUnlabeled);
      EXPECT_EQ(ab.batch.labels()[j], expect);
    }
  }
}

TEST(AssembleEpoch, SizedBatchesCoverEveryColumnOnce) {
  const DatasetBundle b = small_bundle();
  std::vector<int> pl = *b.y_target_true;
  std::vector<bool> mask(30);
  for (std::size_t j = 0; j < 30; ++j) mask[j] = j % 3 != 0;
  BatchSpec spec;
  spec.mode = BatchSpec::Mode::sized;
  spec.per_class = 4;
  std::mt19937_64 rng(1);
  const auto batches = assemble_epoch(b.training_view(), pl, mask, spec, rng);
  EXPECT_GT(batches.size(), 1u);
  std::multiset<std::size_t> src, tgt;
  for (const auto& ab : batches) {
    for (std::size_t j = 0; j < ab.batch.size(); ++j) {
      (ab.batch.domains()[j] == Domain::source ? src : tgt).insert(ab.origin[j]);
    }
  }
  EXPECT_EQ(src.size(), 30u);
  EXPECT_EQ(tgt.size(), 30u);
  EXPECT_EQ(std::set<std::size_t>(src.begin(), src.end()).size(), 30u);
  EXPECT_EQ(std::set<std::size_t>(tgt.begin(), tgt.end()).size(), 30u);

  spec.mode = BatchSpec::Mode::full;
  EXPECT_EQ(assemble_epoch(b.training_view(), pl, mask, spec, rng).size(), 1u);
}

TEST(AssembleBatch, RejectsMisalignedSelection) {
  const DatasetBundle b = small_bundle();
  EXPECT_THROW(assemble_batch(b.training_view(), std::vector<int>(29, 0), std::vector<bool>(29, false)),
               DimensionError);
}

}  // namespace
}  // namespace goal
