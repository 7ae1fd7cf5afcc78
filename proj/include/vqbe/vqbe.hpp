#pragma once

// Everything except the HTTP binding (vqbe/http_server.hpp), which pulls in
// cpp-httplib.

#include "vqbe/bench.hpp"
#include "vqbe/datagen.hpp"
#include "vqbe/dsl.hpp"
#include "vqbe/errors.hpp"
#include "vqbe/executor.hpp"
#include "vqbe/json_io.hpp"
#include "vqbe/oracle.hpp"
#include "vqbe/predicates.hpp"
#include "vqbe/scene_model.hpp"
#include "vqbe/session_api.hpp"
#include "vqbe/sql_emitter.hpp"
#include "vqbe/synthesizer.hpp"
