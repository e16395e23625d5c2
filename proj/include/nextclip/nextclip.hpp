#pragma once

#include "nextclip/binio.hpp"
#include "nextclip/checkpoint.hpp"
#include "nextclip/clipseq.hpp"
#include "nextclip/condition.hpp"
#include "nextclip/config.hpp"
#include "nextclip/error.hpp"
#include "nextclip/evalkit.hpp"
#include "nextclip/maskgen.hpp"
#include "nextclip/model.hpp"
#include "nextclip/rng.hpp"
#include "nextclip/sampler.hpp"
#include "nextclip/trainer.hpp"
#include "nextclip/version.hpp"
#include "nextclip/videodata.hpp"
