// Copyright 2026 The Resiscale Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RESISCALE_TOOLS_CLI_H_
#define RESISCALE_TOOLS_CLI_H_

#include <ostream>
#include <string>
#include <vector>

namespace resiscale::cli {

enum ExitCode {
  kExitOk = 0,
  kExitUsage = 1,
  kExitIo = 2,
  kExitCorrupt = 3,
  kExitConfig = 4,
};

// Runs one command line (args[0] is the program name). Results go to `out`,
// logs and errors to `err`.
int Run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace resiscale::cli

#endif  // RESISCALE_TOOLS_CLI_H_
