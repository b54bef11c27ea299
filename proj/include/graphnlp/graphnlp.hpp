// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#ifndef GRAPHNLP_GRAPHNLP_HPP
#define GRAPHNLP_GRAPHNLP_HPP

#include "graphnlp/errors.hpp"
#include "graphnlp/expr.hpp"
#include "graphnlp/ipm.hpp"
#include "graphnlp/kkt.hpp"
#include "graphnlp/ldlt.hpp"
#include "graphnlp/model_json.hpp"
#include "graphnlp/models.hpp"
#include "graphnlp/nlp_functions.hpp"
#include "graphnlp/optigraph.hpp"
#include "graphnlp/ordering.hpp"
#include "graphnlp/sparse.hpp"

#endif  // GRAPHNLP_GRAPHNLP_HPP
