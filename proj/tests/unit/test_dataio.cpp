#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "bellamy/csv.hpp"
#include "bellamy/dataio.hpp"
#include "bellamy/error.hpp"
#include "bellamy/synthetic.hpp"

using namespace bellamy;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::io;
}

// Shaped like the published experiment files: one CSV per algorithm with
// instance type, machine count, data size in MB and the job arguments.
constexpr const char* kManifest = R"(# sgd experiments
algorithm = sgd
scale_out = machine_count
runtime = gross_runtime
runtime_unit = ms
essential.dataset_size = data_size_MB : natural : MB
essential.dataset_characteristics = observations+features : text
essential.job_parameters = iterations : text
essential.node_type = instance_type : text
optional.memory_mb = memory : natural
optional.job_name = "sgd" : text
)";

constexpr const char* kCsv =
    "instance_type,machine_count,data_size_MB,observations,features,iterations,memory,gross_runtime\n"
    "m5.xlarge,2,1024,1000000,100,10,16384,412000\n"
    "m5.xlarge,4,1024,1000000,100,10,16384,251000\n"
    "m5.xlarge,4,1024,1000000,100,10,,249000\n"
    "c5.2xlarge,2,2048,5000000,20,25,16384,900500\n";

RunRecord rec(std::string node, std::string params, std::uint64_t size, std::string chars,
              std::string algo = "sgd") {
  RunRecord r;
  r.algorithm = std::move(algo);
  r.scale_out = 2;
  r.runtime_seconds = 10.0;
  r.context = {std::move(node), std::move(params), size, std::move(chars)};
  return r;
}

}  // namespace

TEST_SUITE("dataio") {

TEST_CASE("csv parsing and escaping") {
  const auto rows = csv::parse("a,\"b,c\",\"say \"\"hi\"\"\"\r\n1,2,3\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][1] == "b,c");
  CHECK(rows[0][2] == "say \"hi\"");
  CHECK(rows[1] == csv::Row{"1", "2", "3"});
  CHECK(csv::escape("x,y") == "\"x,y\"");
  CHECK(csv::escape("plain") == "plain");
  CHECK(csv::parse(csv::format_row({"a\"b", "c\nd", ""})).front() == csv::Row{"a\"b", "c\nd", ""});
}

TEST_CASE("manifest parsing") {
  const auto m = DatasetManifest::parse(kManifest);
  CHECK(m.algorithm == "sgd");
  CHECK(m.runtime_scale == 1e-3);
  REQUIRE(m.essential.size() == 4);
  CHECK(m.essential[0].unit_scale == (1u << 20));
  CHECK(m.essential[1].columns == std::vector<std::string>{"observations", "features"});
  CHECK(m.optional[1].literal == std::optional<std::string>("sgd"));
  CHECK(m.context_roles.at("node_type") == "node_type");
  const auto schema = m.schema();
  CHECK(schema.essential[0].kind == PropertyKind::natural);
  CHECK(schema.optional.size() == 2);

  const auto again = DatasetManifest::parse(m.to_text());
  CHECK(again.schema() == schema);
  CHECK(again.to_text() == m.to_text());
}

TEST_CASE("manifest errors are config errors") {
  CHECK(kind_of([] { DatasetManifest::parse("algorithm = x\nruntime = t\nessential.a = a : text\n"); }) ==
        ErrorKind::config);
  CHECK(kind_of([] { DatasetManifest::parse("algorithm = x\nscale_out = s\nruntime = t\n"); }) == ErrorKind::config);
  CHECK(kind_of([] {
          DatasetManifest::parse("algorithm = x\nscale_out = s\nruntime = t\nessential.a = a : float\n");
        }) == ErrorKind::config);
  CHECK(kind_of([] {
          DatasetManifest::parse("algorithm = x\nscale_out = s\nruntime = t\nessential.a = a : text : MB\n");
        }) == ErrorKind::config);
  CHECK(kind_of([] {
          DatasetManifest::parse("algorithm = x\nscale_out = s\nruntime = t\nessential.a = a : text\nbogus = 1\n");
        }) == ErrorKind::config);
  CHECK(kind_of([] {
          DatasetManifest::parse("algorithm = x\nscale_out = s\nruntime = t\nessential.a = a : text\ncontext.node_type = b\n");
        }) == ErrorKind::config);
  CHECK(kind_of([] { DatasetManifest::load("/nonexistent/manifest.txt"); }) == ErrorKind::config);
}

TEST_CASE("loading applies units, joins columns and reports contexts") {
  const auto m = DatasetManifest::parse(kManifest);
  LoadReport report;
  const auto records = load_records(kCsv, m, &report);
  REQUIRE(records.size() == 4);
  CHECK(records[0].runtime_seconds == doctest::Approx(412.0));
  CHECK(records[0].properties.at("dataset_size").as_natural() == 1024ull << 20);
  CHECK(records[0].properties.at("dataset_characteristics").as_text() == "1000000 100");
  CHECK(records[0].properties.at("job_name").as_text() == "sgd");
  CHECK(!records[2].properties.contains("memory_mb"));
  CHECK(records[0].context == records[2].context);
  CHECK(records[0].context.dataset_size == 1024ull << 20);
  CHECK(report.rows == 4);
  REQUIRE(report.contexts.size() == 2);
  CHECK(report.contexts[0].repetitions.at(4) == 2);
  CHECK(group_by_context(records).size() == 2);
  CHECK(report.summary().find("2 contexts") != std::string::npos);
}

TEST_CASE("loading errors name the row") {
  const auto m = DatasetManifest::parse(kManifest);
  auto expect_data_error = [&](const std::string& text, const std::string& fragment) {
    try {
      load_records(text, m);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::data);
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  const std::string header =
      "instance_type,machine_count,data_size_MB,observations,features,iterations,memory,gross_runtime\n";
  expect_data_error(header + "m5,2,10,1,1,1,1,0\n", "row 1");
  expect_data_error(header + "m5,2,10,1,1,1,1,5\nm5,x,10,1,1,1,1,5\n", "row 2");
  expect_data_error(header + "m5,2,10,1,1,1,1,5,extra\n", "row 1");
  expect_data_error("instance_type,machine_count\nm5,2\n", "missing column");
  expect_data_error(header + ",2,10,1,1,1,1,5\n", "node_type");
  CHECK(kind_of([&] { load_dataset("/nonexistent.csv", m); }) == ErrorKind::data);
}

TEST_CASE("filters keep matching rows only") {
  auto m = DatasetManifest::parse(std::string(kManifest) + "filter.instance_type = m5.xlarge\n");
  CHECK(load_records(kCsv, m).size() == 3);
}

TEST_CASE("write then load preserves the record multiset") {
  const auto contexts = synthetic_contexts(3, 5);
  auto runs = generate_runs(contexts, {}, 5);
  runs[1].properties.erase("memory_mb");
  const auto schema = synthetic_schema();
  const auto path = std::filesystem::temp_directory_path() / "bellamy_dataio_roundtrip.csv";
  write_records(path, runs, schema);
  auto manifest = canonical_manifest(schema);
  auto back = load_dataset(path, manifest);
  REQUIRE(back.size() == runs.size());
  auto key = [](const RunRecord& r) {
    return std::tuple(r.algorithm, r.scale_out, r.runtime_seconds, r.properties, r.context);
  };
  std::vector<decltype(key(runs[0]))> a, b;
  for (const auto& r : runs) a.push_back(key(r));
  for (const auto& r : back) b.push_back(key(r));
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
  std::filesystem::remove(path);
}

TEST_CASE("variant filtering") {
  const ContextKey target{"m5.xlarge", "--iterations 10", 1000, "dense"};
  std::vector<RunRecord> records{
      rec("m5.xlarge", "--iterations 10", 1000, "dense"),      // target itself
      rec("c5.2xlarge", "--iterations 10", 5000, "sparse"),    // job parameters match
      rec("c5.2xlarge", "--iterations 20", 1200, "sparse"),    // exactly 1.2x
      rec("c5.2xlarge", "--iterations 20", 1199, "sparse"),    // just below 20%
      rec("r5.large", "--iterations 30", 800, "text"),         // exactly 0.8x
      rec("r5.large", "--iterations 30", 5000, "text", "grep"),
      rec("m5.xlarge", "--iterations 10", 1000, "dense", "grep"),
  };
  CHECK(filter_for_variant(records, target, "sgd", Variant::local).empty());
  const auto full = filter_for_variant(records, target, "sgd", Variant::full);
  CHECK(full.size() == 4);
  for (const auto& r : full) {
    CHECK(r.algorithm == "sgd");
    CHECK(!(r.context == target));
  }
  const auto filtered = filter_for_variant(records, target, "sgd", Variant::filtered);
  REQUIRE(filtered.size() == 2);
  CHECK(filtered[0].context.dataset_size == 1200);
  CHECK(filtered[1].context.dataset_size == 800);
  for (const auto& f : filtered)
    CHECK(std::any_of(full.begin(), full.end(), [&](const RunRecord& r) { return r.context == f.context; }));

  CHECK(sizes_differ_significantly(1200, 1000));
  CHECK(!sizes_differ_significantly(1199, 1000));
  CHECK(sizes_differ_significantly(800, 1000));
  CHECK(!sizes_differ_significantly(801, 1000));
  CHECK(!sizes_differ_significantly(0, 0));
  CHECK(parse_variant("filtered") == Variant::filtered);
  CHECK(kind_of([] { parse_variant("partial"); }) == ErrorKind::config);
}

TEST_CASE("filtered is a subset of full on synthetic contexts") {
  const auto contexts = synthetic_contexts(12, 3);
  const auto runs = generate_runs(contexts, {.repetitions = 1}, 3);
  for (const auto& c : contexts) {
    const auto full = filter_for_variant(runs, c.key, "synthetic-sgd", Variant::full);
    const auto filtered = filter_for_variant(runs, c.key, "synthetic-sgd", Variant::filtered);
    CHECK(filtered.size() <= full.size());
    for (const auto& f : filtered) {
      CHECK(f.context.node_type != c.key.node_type);
      CHECK(std::any_of(full.begin(), full.end(), [&](const RunRecord& r) {
        return r.context == f.context && r.scale_out == f.scale_out;
      }));
    }
  }
}

TEST_CASE("shipped manifests parse and load a C3O-shaped sample") {
  const std::filesystem::path dir = std::filesystem::path(BELLAMY_GOLDEN_DIR) / ".." / ".." / "data" / "manifests";
  for (const char* name : {"sort", "grep", "sgd", "kmeans", "pagerank"}) {
    const auto m = DatasetManifest::load(dir / (std::string("c3o_") + name + ".manifest"));
    CHECK(m.algorithm == name);
    CHECK(m.schema().essential.size() == 4);
  }
  CHECK(DatasetManifest::load(dir / "synthetic.manifest").schema() == synthetic_schema());

  const auto sgd = DatasetManifest::load(dir / "c3o_sgd.manifest");
  const std::string csv =
      "machine_type,instance_count,data_size_MB,observations,features,iterations,gross_runtime\n"
      "m5.xlarge,2,1024,1000000,100,10,120000\n"
      "m5.xlarge,4,1024,1000000,100,10,70000\n"
      "c5.xlarge,2,1024,1000000,100,10,90000\n";
  LoadReport report;
  const auto records = load_records(csv, sgd, &report);
  REQUIRE(records.size() == 3);
  CHECK(report.contexts.size() == 2);
  CHECK(records[0].runtime_seconds == doctest::Approx(120.0));
  CHECK(records[1].scale_out == 4);
  CHECK(records[0].context.dataset_size == 1024ull << 20);
  CHECK(records[0].context.dataset_characteristics == "1000000 100");
}

}
