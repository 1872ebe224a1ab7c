#pragma once

// Everything in one include.

#include "scene/backend.hpp"
#include "scene/caching_backend.hpp"
#include "scene/cfgen.hpp"
#include "scene/config.hpp"
#include "scene/domain.hpp"
#include "scene/error.hpp"
#include "scene/extraction.hpp"
#include "scene/http_backend.hpp"
#include "scene/http_server.hpp"
#include "scene/metrics.hpp"
#include "scene/mock_backend.hpp"
#include "scene/pipeline.hpp"
#include "scene/protocol.hpp"
#include "scene/random.hpp"
#include "scene/report.hpp"
#include "scene/text.hpp"
#include "scene/types.hpp"
