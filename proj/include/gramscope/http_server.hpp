#pragma once

// Binds an AnnotationProject to an HTTP server.

#include <filesystem>
#include <optional>
#include <string>

#include <httplib.h>

#include "gramscope/service.hpp"

namespace gramscope {

inline void install_routes(httplib::Server& server, AnnotationProject& project,
                           const std::optional<std::filesystem::path>& ui_dir = std::nullopt) {
  auto dispatch = [&project](const httplib::Request& req, httplib::Response& res) {
    QueryParams q;
    for (const auto& [k, v] : req.params) q[k] = v;
    const Response r = project.handle(req.method, req.path, q, req.body);
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    res.set_content(r.body, r.content_type);
  };
  server.Get(R"(/api/.*)", dispatch);
  server.Post(R"(/api/.*)", dispatch);
  if (ui_dir) {
    if (!std::filesystem::is_directory(*ui_dir))
      fail(ErrorKind::UnreadableFile, "UI directory " + ui_dir->string() + " does not exist");
    server.set_mount_point("/", ui_dir->string());
  }
}

/// Blocks serving until the server is stopped.
inline void serve(AnnotationProject& project, const std::string& host, int port,
                  const std::optional<std::filesystem::path>& ui_dir = std::nullopt) {
  httplib::Server server;
  install_routes(server, project, ui_dir);
  if (!server.listen(host, port)) fail(ErrorKind::IoError, "cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace gramscope
