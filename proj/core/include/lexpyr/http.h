// Copyright 2026 The lexpyr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LEXPYR_HTTP_H_
#define LEXPYR_HTTP_H_

#include <chrono>
#include <string>

#include <nlohmann/json.hpp>

namespace lexpyr {

struct HttpEndpoint {
  std::string url;             // scheme://host[:port]/path
  std::string auth_token_env;  // bearer token env var; empty for none
  std::chrono::milliseconds timeout{30000};
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{200};
};

// POSTs a JSON body and returns the parsed JSON response. Transport errors,
// 429 and 5xx responses are retried with exponential backoff; other non-2xx
// statuses fail immediately.
nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body);

}  // namespace lexpyr

#endif  // LEXPYR_HTTP_H_
