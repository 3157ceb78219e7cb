#include "hiermesh/annotation.hpp"

#include <cmath>
#include <cstdlib>
#include <optional>
#include <thread>

#include <httplib.h>

#include "hiermesh/articulation.hpp"
#include "hiermesh/dataset.hpp"
#include "hiermesh/error.hpp"
#include "hiermesh/obj_io.hpp"
#include "json_util.hpp"

namespace hiermesh {

using detail::json;

namespace {

HttpResponse json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

HttpResponse error_response(int status, const std::string& message) {
  return json_response(status, json{{"error", message}});
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const std::size_t j = path.find('/', i);
    const std::size_t end = j == std::string::npos ? path.size() : j;
    if (end > i) out.push_back(path.substr(i, end - i));
    i = end;
  }
  return out;
}

std::optional<std::string> query_value(const std::string& query, const std::string& key) {
  std::size_t i = 0;
  while (i <= query.size()) {
    const std::size_t amp = query.find('&', i);
    const std::string pair = query.substr(i, amp == std::string::npos ? std::string::npos : amp - i);
    const std::size_t eq = pair.find('=');
    if (pair.substr(0, eq) == key) return eq == std::string::npos ? std::string() : pair.substr(eq + 1);
    if (amp == std::string::npos) break;
    i = amp + 1;
  }
  return std::nullopt;
}

std::optional<int> parse_int(const std::string& s) {
  if (s.empty() || s.size() > 9) return std::nullopt;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  return std::stoi(s);
}

std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

const PartRecord* find_part(const ObjectRecord& record, int part_id) {
  for (const PartRecord& p : record.parts) {
    if (p.part_id == part_id) return &p;
  }
  return nullptr;
}

std::string status_of(const ObjectRecord& record) {
  for (const PartRecord& p : record.parts) {
    if (p.joint.exists && p.version == 0) return "pending";
  }
  return "annotated";
}

}  // namespace

AnnotationService::AnnotationService(std::filesystem::path root) : root_(std::move(root)) { reload(); }

void AnnotationService::reload() {
  std::map<std::string, std::shared_ptr<Entry>> fresh;
  for (const auto& dir : list_object_dirs(root_)) {
    ObjectRecord record;
    try {
      record = load_object(dir);
    } catch (const Error&) {
      continue;
    }
    auto entry = std::make_shared<Entry>();
    entry->dir = dir;
    const std::string id = record.object_id;
    entry->snapshot = std::make_shared<const ObjectRecord>(std::move(record));
    fresh[id] = std::move(entry);
  }
  std::lock_guard lock(index_mutex_);
  entries_ = std::move(fresh);
}

std::shared_ptr<AnnotationService::Entry> AnnotationService::find(const std::string& id) const {
  std::lock_guard lock(index_mutex_);
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : it->second;
}

std::shared_ptr<const ObjectRecord> AnnotationService::snapshot(Entry& entry) const {
  return std::atomic_load(&entry.snapshot);
}

HttpResponse AnnotationService::list() const {
  std::vector<std::shared_ptr<Entry>> entries;
  {
    std::lock_guard lock(index_mutex_);
    for (const auto& [id, e] : entries_) entries.push_back(e);
  }
  json out = json::array();
  for (const auto& e : entries) {
    const auto rec = std::atomic_load(&e->snapshot);
    out.push_back({{"id", rec->object_id},
                   {"category", rec->category},
                   {"parts", rec->parts.size()},
                   {"status", status_of(*rec)}});
  }
  return json_response(200, out);
}

HttpResponse AnnotationService::post_joint(Entry& entry, int part_id, const std::string& body) {
  json request;
  try {
    request = json::parse(body);
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed JSON: ") + e.what());
  }
  if (!request.is_object() || !request.contains("version") || !request["version"].is_number_integer()) {
    return error_response(422, "request needs an integer version");
  }
  if (!request.contains("joint")) return error_response(422, "request needs a joint");
  Joint joint;
  try {
    joint = detail::joint_from_json(request["joint"]);
  } catch (const Error& e) {
    return error_response(422, e.what());
  }
  if (auto why = joint_violation(joint)) return error_response(422, *why);

  std::lock_guard lock(entry.write);
  const auto current = snapshot(entry);
  if (!find_part(*current, part_id)) return error_response(404, "unknown part " + std::to_string(part_id));
  ObjectRecord next = *current;
  PartRecord* part = nullptr;
  for (PartRecord& p : next.parts) {
    if (p.part_id == part_id) part = &p;
  }
  if (request["version"].get<long long>() != part->version) {
    return json_response(409, json{{"error", "version conflict"}, {"version", part->version}});
  }
  part->joint = joint;
  part->version += 1;
  try {
    validate_object(next);
  } catch (const Error& e) {
    return error_response(422, e.what());
  }
  try {
    save_object(next, entry.dir);
  } catch (const Error& e) {
    return error_response(500, e.what());
  }
  const int version = part->version;
  std::atomic_store(&entry.snapshot, std::shared_ptr<const ObjectRecord>(std::make_shared<ObjectRecord>(next)));
  return json_response(200, json{{"version", version}, {"joint", detail::joint_to_json(joint)}});
}

HttpResponse AnnotationService::handle(const std::string& method, const std::string& target, const std::string& body) {
  const std::size_t q = target.find('?');
  const std::string path = target.substr(0, q);
  const std::string query = q == std::string::npos ? std::string() : target.substr(q + 1);
  const auto seg = split_path(path);
  if (seg.empty() || seg[0] != "objects") return error_response(404, "no route for " + path);
  const bool get = method == "GET";
  if (seg.size() == 1) return get ? list() : error_response(405, "method not allowed");

  auto entry = find(seg[1]);
  if (!entry) return error_response(404, "unknown object " + seg[1]);
  const auto record = snapshot(*entry);

  if (seg.size() == 2) {
    if (!get) return error_response(405, "method not allowed");
    return {200, "application/json", object_to_json(*record)};
  }
  const bool mesh_route = seg.size() == 4 && seg[2] == "mesh";
  const bool part_route = seg.size() == 5 && seg[2] == "parts";
  if (!mesh_route && !part_route) return error_response(404, "no route for " + path);
  const auto part_id = parse_int(seg[3]);
  const PartRecord* part = part_id ? find_part(*record, *part_id) : nullptr;
  if (!part) return error_response(404, "unknown part " + seg[3]);

  if (mesh_route) {
    if (!get) return error_response(405, "method not allowed");
    return {200, "text/plain", to_obj_string(part->mesh)};
  }
  const std::string& action = seg[4];
  if (action == "hypotheses") {
    if (!get) return error_response(405, "method not allowed");
    json list = json::array();
    for (const Joint& j : joint_hypotheses(part->aabb)) list.push_back(detail::joint_to_json(j));
    return json_response(200, json{{"part", part->part_id}, {"hypotheses", list}});
  }
  if (action == "joint") {
    if (method != "POST") return error_response(405, "method not allowed");
    return post_joint(*entry, part->part_id, body);
  }
  if (action == "transform") {
    if (!get) return error_response(405, "method not allowed");
    const auto raw = query_value(query, "t");
    const auto t = raw ? parse_real(*raw) : std::nullopt;
    if (!t) return error_response(400, "query parameter t must be a number");
    if (*t < 0.0 || *t > 1.0) return error_response(422, "t must lie in [0, 1]");
    const Eigen::Matrix4d m = joint_transform(part->joint, *t).matrix();
    json rows = json::array();
    for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
    return json_response(200, json{{"t", *t}, {"matrix", rows}, {"version", part->version}});
  }
  return error_response(404, "no route for " + path);
}

struct AnnotationServer::Impl {
  AnnotationService* service;
  httplib::Server server;
};

AnnotationServer::AnnotationServer(AnnotationService& service) : impl_(std::make_unique<Impl>()) {
  impl_->service = &service;
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    std::string target = req.path;
    if (!req.params.empty()) {
      target += '?';
      bool first = true;
      for (const auto& [k, v] : req.params) {
        if (!first) target += '&';
        target += k + "=" + v;
        first = false;
      }
    }
    const HttpResponse r = impl_->service->handle(req.method, target, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
}

AnnotationServer::~AnnotationServer() = default;

void AnnotationServer::listen(const std::string& host, int port, const std::function<void(int)>& on_ready) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else {
    HIERMESH_CHECK(impl_->server.bind_to_port(host, port), ErrorKind::kIo,
                   "cannot bind " + host + ":" + std::to_string(port));
  }
  HIERMESH_CHECK(bound > 0, ErrorKind::kIo, "cannot bind " + host);
  if (on_ready) {
    std::thread([this, bound, on_ready] {
      impl_->server.wait_until_ready();
      on_ready(bound);
    }).detach();
  }
  impl_->server.listen_after_bind();
}

void AnnotationServer::stop() { impl_->server.stop(); }

}  // namespace hiermesh
