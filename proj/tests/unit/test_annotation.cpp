#include <doctest.h>

#include <filesystem>
#include <future>
#include <thread>

#include "hiermesh/annotation.hpp"
#include "hiermesh/articulation.hpp"
#include "hiermesh/dataset.hpp"
#include "hiermesh/rng.hpp"

#include <httplib.h>
#include <json.hpp>

using namespace hiermesh;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  fs::path root = fs::temp_directory_path() / "hiermesh_annotation_test";
  ObjectRecord record;

  Fixture() {
    fs::remove_all(root);
    record = generate_synthetic_object("storage", 7);
    save_object(record, root / record.object_id);
    save_object(generate_synthetic_object("table", 1), root / "table_000001");
  }
  ~Fixture() { fs::remove_all(root); }

  std::string part_url(int part, const std::string& action) const {
    return "/objects/" + record.object_id + "/parts/" + std::to_string(part) + "/" + action;
  }
};

json parse(const HttpResponse& r) { return json::parse(r.body); }

json joint_json(const Joint& j) {
  return json{{"type", std::string(to_string(j.type))},
              {"exists", j.exists},
              {"orientation", {j.orientation.x(), j.orientation.y(), j.orientation.z()}},
              {"location", {j.location.x(), j.location.y(), j.location.z()}},
              {"range", j.range}};
}

}  // namespace

TEST_CASE("listing and reading objects") {
  Fixture f;
  AnnotationService svc(f.root);
  const HttpResponse list = svc.handle("GET", "/objects");
  REQUIRE(list.status == 200);
  const json l = parse(list);
  REQUIRE(l.size() == 2);
  for (const json& o : l) {
    CHECK(o.contains("id"));
    CHECK(o["status"] == "pending");
  }
  const HttpResponse obj = svc.handle("GET", "/objects/" + f.record.object_id);
  CHECK(obj.status == 200);
  CHECK(parse(obj)["object_id"] == f.record.object_id);
  const HttpResponse mesh = svc.handle("GET", "/objects/" + f.record.object_id + "/mesh/0");
  CHECK(mesh.status == 200);
  CHECK(mesh.content_type == "text/plain");
  CHECK(mesh.body.find("\nf ") != std::string::npos);

  CHECK(svc.handle("GET", "/objects/nope").status == 404);
  CHECK(svc.handle("GET", "/objects/" + f.record.object_id + "/mesh/99").status == 404);
  CHECK(svc.handle("GET", "/elsewhere").status == 404);
  CHECK(svc.handle("DELETE", "/objects").status == 405);
  CHECK(svc.handle("GET", f.part_url(0, "joint")).status == 405);
}

TEST_CASE("hypotheses and transforms") {
  Fixture f;
  AnnotationService svc(f.root);
  const HttpResponse h = svc.handle("GET", f.part_url(1, "hypotheses"));
  REQUIRE(h.status == 200);
  const json hyp = parse(h)["hypotheses"];
  REQUIRE(hyp.size() == 4);
  const auto expected = joint_hypotheses(f.record.parts[1].aabb);
  for (int k = 0; k < 4; ++k) CHECK(hyp[k] == joint_json(expected[k]));

  CHECK(svc.handle("GET", f.part_url(0, "transform?t=abc")).status == 400);
  CHECK(svc.handle("GET", f.part_url(0, "transform")).status == 400);
  CHECK(svc.handle("GET", f.part_url(0, "transform?t=1.5")).status == 422);
  CHECK(svc.handle("GET", f.part_url(0, "transform?t=-0.1")).status == 422);

  // Server matrices against locally computed transforms.
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const int part = static_cast<int>(rng.below(f.record.parts.size()));
    const double t = rng.uniform();
    const HttpResponse r = svc.handle("GET", f.part_url(part, "transform?t=" + std::to_string(t)));
    REQUIRE(r.status == 200);
    const json m = parse(r)["matrix"];
    const double sent = std::stod(std::to_string(t));
    const Eigen::Matrix4d local = joint_transform(f.record.parts[static_cast<std::size_t>(part)].joint, sent).matrix();
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) worst = std::max(worst, std::abs(m[i][j].get<double>() - local(i, j)));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("saving a hypothesis persists it byte for byte and bumps the version") {
  Fixture f;
  AnnotationService svc(f.root);
  const json hyp = parse(svc.handle("GET", f.part_url(1, "hypotheses")))["hypotheses"];
  const json request{{"version", 0}, {"joint", hyp[2]}};
  const HttpResponse ok = svc.handle("POST", f.part_url(1, "joint"), request.dump());
  REQUIRE(ok.status == 200);
  CHECK(parse(ok)["version"] == 1);
  CHECK(parse(ok)["joint"].dump() == hyp[2].dump());

  const ObjectRecord disk = load_object(f.root / f.record.object_id);
  CHECK(joint_json(disk.parts[1].joint).dump() == hyp[2].dump());
  CHECK(disk.parts[1].version == 1);

  // Stale version.
  const HttpResponse stale = svc.handle("POST", f.part_url(1, "joint"), request.dump());
  CHECK(stale.status == 409);
  CHECK(parse(stale)["version"] == 1);

  // A fresh service sees the write.
  AnnotationService again(f.root);
  CHECK(parse(again.handle("GET", "/objects/" + f.record.object_id))["parts"][1]["version"] == 1);
}

TEST_CASE("invalid writes are rejected without touching disk") {
  Fixture f;
  AnnotationService svc(f.root);
  const std::string before = object_to_json(load_object(f.root / f.record.object_id));
  json bad_axis = joint_json(joint_hypotheses(f.record.parts[0].aabb)[0]);
  bad_axis["orientation"] = {0.0, 0.0, 2.0};
  CHECK(svc.handle("POST", f.part_url(0, "joint"), json{{"version", 0}, {"joint", bad_axis}}.dump()).status == 422);
  json bad_range = joint_json(joint_hypotheses(f.record.parts[0].aabb)[0]);
  bad_range["range"] = 1.0;
  CHECK(svc.handle("POST", f.part_url(0, "joint"), json{{"version", 0}, {"joint", bad_range}}.dump()).status == 422);
  CHECK(svc.handle("POST", f.part_url(0, "joint"), "{oops").status == 400);
  CHECK(svc.handle("POST", f.part_url(0, "joint"), R"({"joint": {}})").status == 422);
  CHECK(svc.handle("POST", f.part_url(0, "joint"), R"({"version": 0, "joint": {"type": "revolute"}})").status == 422);
  CHECK(svc.handle("POST", f.part_url(42, "joint"), R"({"version": 0})").status == 404);
  CHECK(object_to_json(load_object(f.root / f.record.object_id)) == before);
}

TEST_CASE("served over HTTP") {
  Fixture f;
  AnnotationService svc(f.root);
  AnnotationServer server(svc);
  std::promise<int> bound;
  std::thread worker([&] { server.listen("127.0.0.1", 0, [&](int port) { bound.set_value(port); }); });
  const int port = bound.get_future().get();
  REQUIRE(port > 0);

  httplib::Client client("127.0.0.1", port);
  auto list = client.Get("/objects");
  REQUIRE(list);
  CHECK(list->status == 200);
  CHECK(json::parse(list->body).size() == 2);

  auto hyp = client.Get(f.part_url(1, "hypotheses"));
  REQUIRE(hyp);
  const json h = json::parse(hyp->body)["hypotheses"];
  auto post = client.Post(f.part_url(1, "joint"), json{{"version", 0}, {"joint", h[0]}}.dump(), "application/json");
  REQUIRE(post);
  CHECK(post->status == 200);
  auto conflict = client.Post(f.part_url(1, "joint"), json{{"version", 0}, {"joint", h[1]}}.dump(), "application/json");
  REQUIRE(conflict);
  CHECK(conflict->status == 409);
  auto tr = client.Get(f.part_url(1, "transform?t=0.5"));
  REQUIRE(tr);
  CHECK(tr->status == 200);
  CHECK(json::parse(tr->body)["version"] == 1);
  auto bad = client.Get(f.part_url(1, "transform?t=zz"));
  REQUIRE(bad);
  CHECK(bad->status == 400);

  server.stop();
  worker.join();
}

TEST_CASE("concurrent writers: exactly one wins each version") {
  Fixture f;
  AnnotationService svc(f.root);
  const json h = parse(svc.handle("GET", f.part_url(1, "hypotheses")))["hypotheses"];
  std::vector<std::future<int>> results;
  for (int k = 0; k < 4; ++k) {
    results.push_back(std::async(std::launch::async, [&, k] {
      return svc.handle("POST", f.part_url(1, "joint"), json{{"version", 0}, {"joint", h[k]}}.dump()).status;
    }));
  }
  int wins = 0;
  int conflicts = 0;
  for (auto& r : results) {
    const int s = r.get();
    wins += s == 200;
    conflicts += s == 409;
  }
  CHECK(wins == 1);
  CHECK(conflicts == 3);
  CHECK(load_object(f.root / f.record.object_id).parts[1].version == 1);
}
