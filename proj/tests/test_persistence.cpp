#include "rim/checkpoint.hpp"
#include "rim/dataset.hpp"
#include "rim/errors.hpp"
#include "rim/model.hpp"
#include "rim/rimt.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace rim;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rim_persist_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os << bytes;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Rimt, HeaderLayout) {
  RimtArray a{Dtype::f64, {2, 3}, {1, 2, 3, 4, 5, 6}};
  std::ostringstream os;
  write_rimt(os, a);
  const std::string b = os.str();
  ASSERT_EQ(b.size(), 7u + 16 + 48);
  EXPECT_EQ(b.substr(0, 4), "RIMT");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 1);
  EXPECT_EQ(b[6], 2);
  EXPECT_EQ(static_cast<unsigned char>(b[7]), 2);
  EXPECT_EQ(b[8], 0);
  EXPECT_EQ(static_cast<unsigned char>(b[15]), 3);
  double first;
  std::memcpy(&first, b.data() + 23, 8);
  EXPECT_EQ(first, 1.0);
  EXPECT_EQ(a.payload_bytes(), 48u);
}

TEST(Rimt, RoundTripIsBitExactForEveryDtype) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (Dtype dt : {Dtype::f32, Dtype::f64, Dtype::complex64, Dtype::complex128}) {
    RimtArray a{dt, {3, 5}, {}};
    const std::size_t scalars = 15 * (is_complex(dt) ? 2 : 1);
    for (std::size_t i = 0; i < scalars; ++i) {
      double v = std::bit_cast<double>(bits(rng) & 0x7fefffffffffffffULL);
      if (dt == Dtype::f32 || dt == Dtype::complex64) v = static_cast<double>(static_cast<float>(v * 1e-300));
      a.values.push_back(v);
    }
    std::stringstream ss;
    write_rimt(ss, a);
    EXPECT_EQ(ss.str().size(), 7 + 16 + a.payload_bytes() * 1);
    const RimtArray b = read_rimt(ss);
    EXPECT_EQ(b.dtype, dt);
    EXPECT_EQ(b.dims, a.dims);
    EXPECT_TRUE(bit_equal(a.values, b.values));
  }
}

TEST(Rimt, SpecialValuesSurvive) {
  RimtArray a{Dtype::f64, {4}, {-0.0, std::numeric_limits<double>::infinity(), std::numeric_limits<double>::denorm_min(),
                                std::numeric_limits<double>::quiet_NaN()}};
  std::stringstream ss;
  write_rimt(ss, a);
  EXPECT_TRUE(bit_equal(read_rimt(ss).values, a.values));
}

TEST(Rimt, TensorConversionAndFiles) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  Tensor t(Shape{7, 2});
  for (Index i = 0; i < 14; ++i) t.mutable_value().data()[i] = g(rng);
  const fs::path dir = scratch("rimt");
  fs::create_directories(dir);
  save_rimt(dir / "x.rimt", to_rimt(t));
  const Tensor back = from_rimt(load_rimt(dir / "x.rimt"));
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_EQ(back.value(), t.value());
  const RimtArray c = to_rimt(t, Dtype::complex128);
  EXPECT_EQ(c.dims, (std::vector<std::uint64_t>{7}));
  EXPECT_EQ(from_rimt(c).shape(), (Shape{7, 2}));
}

TEST(Rimt, MalformedStreamsAreArtifactErrors) {
  RimtArray a{Dtype::f64, {4}, {1, 2, 3, 4}};
  std::ostringstream os;
  write_rimt(os, a);
  const std::string good = os.str();
  auto read = [](const std::string& bytes) {
    std::istringstream is(bytes);
    return read_rimt(is);
  };
  EXPECT_THROW(read("RIMX" + good.substr(4)), ArtifactError);
  std::string bad = good;
  bad[4] = 2;
  EXPECT_THROW(read(bad), ArtifactError);
  bad = good;
  bad[5] = 9;
  EXPECT_THROW(read(bad), ArtifactError);
  EXPECT_THROW(read(good.substr(0, good.size() - 3)), ArtifactError);
  EXPECT_THROW(read(good.substr(0, 10)), ArtifactError);
  EXPECT_THROW(load_rimt(scratch("absent") / "x.rimt"), ArtifactError);
  EXPECT_THROW(write_rimt(os, RimtArray{Dtype::f64, {3}, {1, 2}}), std::invalid_argument);
}

TEST(Checkpoint, RoundTripGivesBitIdenticalForward) {
  const auto cfg = ModelConfig::tiny(256);
  const auto params = init_params(cfg, 11);
  const fs::path dir = scratch("ckpt");
  fs::create_directories(dir);
  save_checkpoint(dir / "m.ckpt", params, {123, 4});
  EXPECT_FALSE(fs::exists(dir / "m.ckpt.tmp"));
  const auto loaded = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(loaded.meta.step, 123);
  EXPECT_EQ(loaded.meta.epoch, 4);
  EXPECT_TRUE(loaded.params.config == cfg);
  const auto a = params.tensors(), b = loaded.params.tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].value(), b[i].value());
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  Tensor x(Shape{256, 2});
  for (Index i = 0; i < 512; ++i) x.mutable_value().data()[i] = g(rng);
  EXPECT_EQ(rimformer_forward(x, loaded.params).value(), rimformer_forward(x, params).value());
  // Saving the loaded copy reproduces the file byte for byte.
  save_checkpoint(dir / "again.ckpt", loaded.params, loaded.meta);
  EXPECT_EQ(slurp(dir / "again.ckpt"), slurp(dir / "m.ckpt"));
}

TEST(Checkpoint, HeaderIndexesEveryParameter) {
  const auto params = init_params(ModelConfig::tiny(256), 13);
  const fs::path dir = scratch("hdr");
  fs::create_directories(dir);
  save_checkpoint(dir / "m.ckpt", params);
  const std::string bytes = slurp(dir / "m.ckpt");
  const auto nl = bytes.find('\n');
  const auto header = nlohmann::json::parse(bytes.substr(0, nl));
  EXPECT_EQ(header["schema_version"], kCheckpointSchema);
  EXPECT_EQ(header["window"]["slide"], 16);
  EXPECT_EQ(header["window"]["overlap"], 16);
  const auto& index = header["parameters"];
  std::size_t expected_offset = 0, count = 0;
  params.for_each([&](const std::string& name, const Tensor& t) {
    const auto& e = index.at(count++);
    EXPECT_EQ(e["name"], name);
    EXPECT_EQ(e["offset"].get<std::size_t>(), expected_offset);
    const std::size_t bytes_ = 7 + 8 * t.shape().size() + 8 * static_cast<std::size_t>(t.value().size());
    EXPECT_EQ(e["bytes"].get<std::size_t>(), bytes_);
    expected_offset += bytes_;
  });
  EXPECT_EQ(count, index.size());
  EXPECT_EQ(bytes.size(), nl + 1 + expected_offset);
}

TEST(Checkpoint, CorruptFilesAreArtifactErrors) {
  const auto params = init_params(ModelConfig::tiny(256), 14);
  const fs::path dir = scratch("corrupt");
  fs::create_directories(dir);
  save_checkpoint(dir / "m.ckpt", params);
  const std::string good = slurp(dir / "m.ckpt");
  const auto nl = good.find('\n');
  auto header = nlohmann::json::parse(good.substr(0, nl));

  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), ArtifactError);
  spit(dir / "trunc.ckpt", good.substr(0, good.size() - 100));
  EXPECT_THROW(load_checkpoint(dir / "trunc.ckpt"), ArtifactError);
  spit(dir / "garbage.ckpt", "{not json\n");
  EXPECT_THROW(load_checkpoint(dir / "garbage.ckpt"), ArtifactError);

  auto with_header = [&](const nlohmann::json& h, const std::string& name) {
    spit(dir / name, h.dump() + "\n" + good.substr(nl + 1));
    return dir / name;
  };
  auto dup = header;
  dup["parameters"][1]["name"] = dup["parameters"][0]["name"];
  EXPECT_THROW(load_checkpoint(with_header(dup, "dup.ckpt")), ArtifactError);
  auto renamed = header;
  renamed["parameters"][2]["name"] = "encoder.0.bogus";
  EXPECT_THROW(load_checkpoint(with_header(renamed, "extra.ckpt")), ArtifactError);
  auto dropped = header;
  dropped["parameters"].erase(dropped["parameters"].size() - 1);
  EXPECT_THROW(load_checkpoint(with_header(dropped, "drop.ckpt")), ArtifactError);
  auto reshaped = header;
  reshaped["model"]["d_model"] = 8;
  reshaped["model"]["d_k"] = 4;
  reshaped["model"]["d_v"] = 4;
  EXPECT_THROW(load_checkpoint(with_header(reshaped, "shape.ckpt")), ArtifactError);
  auto schema = header;
  schema["schema_version"] = 99;
  EXPECT_THROW(load_checkpoint(with_header(schema, "schema.ckpt")), ArtifactError);
}

TEST(Checkpoint, ModelConfigJsonRoundTrip) {
  for (const auto& c : {ModelConfig::full(), ModelConfig::tiny(256)})
    EXPECT_TRUE(model_config_from_json(model_config_to_json(c)) == c);
}

TEST(Splits, CountsForFullAndToySizes) {
  const SplitRatios r;
  EXPECT_EQ(r.counts(800), (std::array<Index, 3>{640, 80, 80}));
  EXPECT_EQ(r.counts(8000), (std::array<Index, 3>{6400, 800, 800}));
  EXPECT_EQ(r.counts(64), (std::array<Index, 3>{51, 7, 6}));
  const auto p = SplitRatios::parse("0.8:0.1:0.1");
  EXPECT_EQ(p.counts(800), (std::array<Index, 3>{640, 80, 80}));
  for (Index n = 0; n < 300; ++n) {
    const auto c = r.counts(n);
    EXPECT_EQ(c[0] + c[1] + c[2], n);
  }
  EXPECT_THROW(SplitRatios::parse("8:1"), std::invalid_argument);
  EXPECT_THROW(SplitRatios::parse("8:-1:1"), std::invalid_argument);
  EXPECT_THROW(SplitRatios::parse("a:b:c"), std::invalid_argument);
}

TEST(Dataset, GenerateAndLoad) {
  const fs::path dir = scratch("data");
  const auto m = generate_dataset(20, dir, SplitRatios{}, 5, dataset_options_for_length(256));
  EXPECT_EQ(m.counts, (std::array<Index, 3>{16, 2, 2}));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  const auto data = load_dataset(dir);
  EXPECT_EQ(data.train.size(), 16u);
  EXPECT_EQ(data.val.size(), 2u);
  EXPECT_EQ(data.test.size(), 2u);
  for (const auto* split : {&data.train, &data.val, &data.test})
    for (const auto& p : *split) {
      EXPECT_EQ(p.input.shape(), (Shape{256, 2}));
      EXPECT_DOUBLE_EQ(p.input.value().cwiseAbs().maxCoeff(), 1.0);
    }
  EXPECT_EQ(data.manifest.sim.n_samples, 256);
}

TEST(Dataset, RealSignalsKeepTheInPhaseChannel) {
  const fs::path iq_dir = scratch("iq"), real_dir = scratch("real");
  auto options = dataset_options_for_length(256);
  generate_dataset(6, iq_dir, SplitRatios{}, 12, options);
  options.channels = 1;
  const auto m = generate_dataset(6, real_dir, SplitRatios{}, 12, options);
  EXPECT_EQ(m.channels, 1);
  const auto iq = load_dataset(iq_dir), real = load_dataset(real_dir);
  EXPECT_EQ(real.manifest.channels, 1);
  ASSERT_EQ(real.train.size(), iq.train.size());
  for (std::size_t k = 0; k < real.train.size(); ++k) {
    const auto& r = real.train[k];
    const auto& c = iq.train[k];
    EXPECT_EQ(r.input.shape(), (Shape{256, 1}));
    EXPECT_EQ(r.scene.targets.size(), c.scene.targets.size());
    // Same scene; the real signal's scale is its own peak |I|.
    EXPECT_DOUBLE_EQ(r.input.value().cwiseAbs().maxCoeff(), 1.0);
    const RowMatrix rebuilt_i = c.input.value().col(0) * c.scale / r.scale;
    EXPECT_LT((r.input.value() - rebuilt_i).cwiseAbs().maxCoeff(), 1e-12);
    const RowMatrix rebuilt_clean = c.target.value().col(0) * c.scale / r.scale;
    EXPECT_LT((r.target.value() - rebuilt_clean).cwiseAbs().maxCoeff(), 1e-12);
  }
  options.channels = 3;
  EXPECT_THROW(generate_dataset(2, scratch("bad_channels"), SplitRatios{}, 1, options), std::invalid_argument);
}

TEST(Dataset, SameSeedGivesIdenticalBytes) {
  const fs::path a = scratch("same_a"), b = scratch("same_b");
  generate_dataset(10, a, SplitRatios{}, 42, dataset_options_for_length(256));
  generate_dataset(10, b, SplitRatios{}, 42, dataset_options_for_length(256));
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  for (const auto& e : fs::directory_iterator(a / "samples"))
    EXPECT_EQ(slurp(e.path()), slurp(b / "samples" / e.path().filename())) << e.path();
  const fs::path c = scratch("same_c");
  generate_dataset(10, c, SplitRatios{}, 43, dataset_options_for_length(256));
  EXPECT_NE(slurp(a / "samples" / "000000.clean.rimt"), slurp(c / "samples" / "000000.clean.rimt"));
}

TEST(Dataset, ManifestJsonRoundTrip) {
  const fs::path dir = scratch("manifest");
  const auto m = generate_dataset(6, dir, SplitRatios{}, 8, dataset_options_for_length(256));
  const auto j = manifest_to_json(m);
  EXPECT_EQ(manifest_to_json(manifest_from_json(j)), j);
  EXPECT_EQ(manifest_to_json(load_manifest(dir)), j);
}

TEST(Dataset, CorruptArtifactsRejected) {
  const fs::path dir = scratch("bad");
  generate_dataset(6, dir, SplitRatios{}, 9, dataset_options_for_length(256));
  EXPECT_THROW(load_dataset(scratch("nothing")), ArtifactError);
  fs::remove(dir / "samples" / "000003.clean.rimt");
  EXPECT_THROW(load_dataset(dir), ArtifactError);
  spit(dir / "manifest.json", "{\"schema_version\": 1}");
  EXPECT_THROW(load_manifest(dir), ArtifactError);
  spit(dir / "manifest.json", "[1, 2");
  EXPECT_THROW(load_manifest(dir), ArtifactError);
}
