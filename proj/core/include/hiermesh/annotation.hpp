#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "hiermesh/record.hpp"

namespace hiermesh {

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// Joint annotation endpoints over a dataset root:
//   GET  /objects
//   GET  /objects/{id}
//   GET  /objects/{id}/mesh/{part}
//   GET  /objects/{id}/parts/{part}/hypotheses
//   POST /objects/{id}/parts/{part}/joint      {"version": v, "joint": {...}}
//   GET  /objects/{id}/parts/{part}/transform?t=...
// Writes require the part's current version (409 otherwise), are validated
// against every record invariant (422) and bump the version.
class AnnotationService {
 public:
  explicit AnnotationService(std::filesystem::path root);

  // `target` is the request path with an optional query string.
  HttpResponse handle(const std::string& method, const std::string& target, const std::string& body = "");

  // Rescans the root for object directories.
  void reload();
  const std::filesystem::path& root() const { return root_; }

 private:
  struct Entry {
    std::filesystem::path dir;
    std::mutex write;
    std::shared_ptr<const ObjectRecord> snapshot;
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  std::shared_ptr<const ObjectRecord> snapshot(Entry& entry) const;

  HttpResponse list() const;
  HttpResponse post_joint(Entry& entry, int part, const std::string& body);

  std::filesystem::path root_;
  mutable std::mutex index_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> entries_;
};

// Serves the service over HTTP until stop() is called from another thread.
// `on_ready` receives the bound port (useful with port 0).
class AnnotationServer {
 public:
  explicit AnnotationServer(AnnotationService& service);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  void listen(const std::string& host, int port, const std::function<void(int)>& on_ready = {});
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hiermesh
