#pragma once

#include "cursor_attn/error.hpp"
#include "cursor_attn/image.hpp"
#include "cursor_attn/nn.hpp"
#include "cursor_attn/pipeline.hpp"
#include "cursor_attn/png.hpp"
#include "cursor_attn/raster.hpp"
#include "cursor_attn/report.hpp"
#include "cursor_attn/rng.hpp"
#include "cursor_attn/session.hpp"
#include "cursor_attn/stats.hpp"
#include "cursor_attn/synthetic.hpp"
#include "cursor_attn/timeseries.hpp"
#include "cursor_attn/trainer.hpp"
