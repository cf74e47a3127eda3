// Bundled word tables for the lemmatizer and tagger. Base forms only; the
// lemmatizer maps inflected forms onto these.

#include <sstream>
#include <string>
#include <unordered_map>

#include "kgr4/text.hpp"

namespace kgr4::lexicon {
namespace {

constexpr const char* kNouns = R"(
man woman boy girl child person people baby kid teenager adult family friend
chef cook player worker student teacher farmer artist doctor nurse driver
pilot police officer soldier dancer singer musician athlete surfer skier
skater rider runner swimmer climber fisherman crowd team group couple guy lady
gentleman mother father son daughter brother sister wife husband king queen
dog cat horse cow sheep goat pig bird duck chicken fish bear elephant giraffe
zebra lion tiger monkey rabbit mouse deer animal puppy kitten pony camel
hand arm leg foot head face hair eye ear mouth nose finger tooth body back
shoulder knee
dish plate bowl cup glass mug bottle jar pot pan kettle spoon fork knife
chopstick tray napkin
car bus truck bike bicycle motorcycle train boat ship plane airplane
skateboard surfboard snowboard ski scooter wagon cart taxi vehicle wheel
ball frisbee kite stick bat racket net goal hoop rope toy game puzzle card
guitar piano drum violin flute trumpet instrument microphone song music
bread apple banana orange cake pizza sandwich egg soup pasta rice salad meat
cheese cookie pie carrot potato tomato vegetable fruit food meal breakfast
lunch dinner snack milk water coffee tea juice wine beer sugar salt sauce
book newspaper magazine letter paper pen pencil notebook page story map sign
phone computer laptop screen camera television radio clock lamp light
wall picture photo fence tree rock stone flower grass leaf plant
bush branch log wood sand snow ice mud dirt puddle wave rain sun sky cloud
wind fire smoke
bag box basket bucket suitcase backpack umbrella hat shirt jacket coat dress
shoe boot sock glove scarf tie necktie uniform costume helmet glasses
sink kitchen garage park beach field table street library bench stage house
mountain river station cafe farm yard room garden lake road shop store office
restaurant school classroom church hospital market city town village building
bridge sidewalk court pool gym playground forest hill desert island ocean sea
shore coast dock harbor airport parking lot floor ceiling door window stair
step roof bed chair couch sofa desk shelf counter oven stove fridge bathroom
bedroom hall yard corner edge side top bottom front middle area place
soap brush wrench hammer saw drill screwdriver broom mop sponge towel blanket
pillow key lock tool machine engine
time day night morning evening afternoon week year moment minute hour
way thing something someone everyone line row piece part lot number word
name color side trick show event party race match practice lesson class work
job game sport trip walk ride view scene crowd audience
)";

constexpr const char* kVerbs = R"(
wash throw cut ride read play kick eat paint climb cook catch carry drink walk
fix pour feed sweep open close clean slice push pull hold sit stand run jump
swim fly drive sing dance write draw look watch see hear listen talk speak
say tell ask answer call shout laugh smile cry sleep wake lie lay rest wait
stay go come leave arrive enter exit move turn stop start begin finish try
use make take give bring get put set place keep find lose win buy sell pay
teach learn study show help work build break fall drop pick lift hang fill
empty mix stir bake boil fry grill chop peel serve order share pass shoot
hit bounce roll spin swing slide skate ski surf hike fish hunt plant grow
water dig rake mow trim pack load unload deliver ship park cross follow lead
chase race fight hug kiss wave point touch feel smell taste dress wear tie
brush comb shave splash spray blow pet walk feed ride demonstrate perform
practice celebrate decorate wrap gather collect sort count stack hang
prepare cover fold hand carry lean kneel crawl
be have do
)";

constexpr const char* kProperNouns = R"(
john mary paris london america europe christmas
)";

constexpr const char* kIrregular = R"(
men man women woman children child people person feet foot teeth tooth
mice mouse geese goose knives knife leaves leaf wolves wolf shelves shelf
loaves loaf lives life wives wife halves half calves calf
is be are be was be were be am be been be being be
has have had have having have
does do did do done do doing do
went go gone go goes go
ran run sat sit ate eat eaten eat made make took take taken take rode ride
ridden ride threw throw thrown throw caught catch held hold stood stand
wrote write written write drove drive driven drive swam swim swum swim drank
drink drunk drink flew fly flown fly fell fall fallen fall gave give given give
seen see came come brought bring bought buy told tell said say got get
gotten get found find thought think sang sing sung sing began begin begun begin
lain lie kept keep slept sleep swept sweep fed feed led lead hung hang
dug dig spun spin won win blew blow blown blow grew grow grown grow drew draw
drawn draw knew know known know wore wear worn wear tore tear torn tear broke
break broken break spoke speak spoken speak chose choose chosen choose hid hide
hidden hide bit bite bitten bite shook shake shaken shake woke wake woken wake
built build sent send spent spend lit light met meet paid pay sold sell taught
teach fought fight shot shoot slid slide stuck stick swung swing
)";

struct Tables {
  std::unordered_map<std::string, PosTag> base;
  std::unordered_map<std::string, std::string> irregular;

  Tables() {
    load(kOther(), PosTag::Other);
    load(kNouns, PosTag::Noun);
    load(kProperNouns, PosTag::PropNoun);
    // Verbs after nouns: words in both tables (e.g. "walk") are tagged VERB.
    load(kVerbs, PosTag::Verb);
    // Auxiliaries are function words for concept extraction.
    for (const char* aux : {"be", "have", "do"}) base[aux] = PosTag::Other;

    std::istringstream in(kIrregular);
    std::string form, lemma;
    while (in >> form >> lemma) irregular.emplace(form, lemma);
  }

  void load(const char* words, PosTag tag) {
    std::istringstream in(words);
    std::string w;
    while (in >> w) base[w] = tag;
  }

  static const char* kOther() {
    return R"(
a an the this that these those some any each every all both either neither no
my your his her its our their mine yours hers ours theirs
i you he she it we they me him us them myself yourself himself herself itself
ourselves themselves who whom whose which what where when why how
in on at by for with without about above below under over near into onto
from to of off out up down through across along around behind beside between
beyond during inside outside past toward towards upon within against among
and or but nor so yet if because while although though than as
not very too also just only still even really quite almost
can could will would shall should may might must
one two three four five six several many much more most few little other
another own same such there here then now
)";
  }
};

const Tables& tables() {
  static const Tables t;
  return t;
}

}  // namespace

const PosTag* find_base(std::string_view lemma) {
  const auto& base = tables().base;
  auto it = base.find(std::string(lemma));
  return it == base.end() ? nullptr : &it->second;
}

std::string_view find_irregular(std::string_view word) {
  const auto& irr = tables().irregular;
  auto it = irr.find(std::string(word));
  return it == irr.end() ? std::string_view{} : std::string_view(it->second);
}

}  // namespace kgr4::lexicon
