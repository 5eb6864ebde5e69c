/*
 * Copyright 2026 The evireg authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef EVIREG_CLI_HPP_
#define EVIREG_CLI_HPP_

#include <string>
#include <vector>

namespace evireg {

// Command surface: generate, train, evaluate, degrade-eval, selective,
// report. Returns the process exit code; every command echoes its resolved
// configuration into the output directory and marks partial outputs
// INCOMPLETE until it finishes.
int cli_run(const std::vector<std::string>& args);

}  // namespace evireg

#endif  // EVIREG_CLI_HPP_
