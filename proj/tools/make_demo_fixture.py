#!/usr/bin/env python3
"""Writes the bundled five-task demo fixture under fixtures/.

Generator responses are listed in the order the breadth-first expansion asks
for them (branch factor 2). Converter and verifier replies follow the
labeling order: terminal leaves by id, each path from the root, every node
once.
"""

import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
DONE = "Work is Done!"


def any_(response):
    return {"match": "any", "response": response}


def guarded(substring, response):
    return {"match": {"substring": substring}, "response": response}


def final(var):
    return any_("print(" + var + ")\n" + DONE)


TASKS = [
    {
        "task_id": "demo-dogs",
        "query": "How many dogs are in the image?",
        "visual_ref": "images/park.jpg",
        "modality": "single-image",
        "gold_answer": "2",
        # best-of-N inference, two candidates per step
        "scale_generator": [
            any_('# Step 1: Locate every dog in the image\ndogs = find(image, "dog")'),
            any_('# Step 1: Ask how many dogs are visible\ncount = vqa(image, "How many dogs are there?")'),
            any_("# Step 2: Count the located dogs\nanswer = len(dog_boxes)"),
            any_("# Step 2: Count the located dogs\nanswer = len(dogs)"),
            final("answer"),
            final("answer"),
        ],
        "scale_verifier": [
            guarded('find(image, "dog")', "correct"),
            guarded('vqa(image, "How many dogs are there?")', "correct"),
        ],
        "generator": [
            any_('# Step 1: Locate every dog in the image\ndogs = find(image, "dog")'),
            any_('# Step 1: Ask how many dogs are visible\ncount = vqa(image, "How many dogs are there?")'),
            # node 1
            guarded("dogs = find", "# Step 2: Count the located dogs\nanswer = len(dogs)"),
            guarded("dogs = find", "# Step 2: Count the located dogs\nanswer = len(dog_boxes)"),
            # node 2
            final("count"),
            final("count"),
            # node 1.1
            final("answer"),
            final("answer"),
            # node 1.2
            final("answer"),
            final("answer"),
        ],
        "stubs": [
            {"fn": "find", "args": ["image", "dog"],
             "ret": [{"region": [10, 20, 110, 220]}, {"region": [300, 40, 420, 260]}]},
            {"fn": "vqa", "args": ["image", "How many dogs are there?"], "ret": 2},
        ],
        # nodes: 1, 1.1, 1.2, 2
        "converter": [
            any_("In this step, we use the object finder to locate the dogs, which returns two boxes."),
            any_("In this step, we use the two located boxes and count them, giving 2 dogs."),
            any_("In this step, we use a count over an undefined set of boxes, so the step fails."),
            any_("In this step, we use visual question answering to ask for the number of dogs, which is 2."),
        ],
        "verifier": [
            guarded('find(image, "dog")', "correct"),
            guarded('vqa(image, "How many dogs are there?")', "correct"),
        ],
    },
    {
        "task_id": "demo-cat",
        "query": "Is the cat black or white?",
        "visual_ref": "images/sofa.jpg",
        "modality": "single-image",
        "gold_answer": "black",
        # best-of-N inference, two candidates per step
        "scale_generator": [
            any_('# Step 1: Find the cat\ncat = find(image, "cat")[0]'),
            any_('# Step 1: Ask for the color of the cat\ncolor = vqa(image, "What color is the cat?")'),
            any_('# Step 2: Ask for the color inside the cat region\nanswer = vqa(cat, "Is the cat black or white?")'),
            any_('# Step 2: Ask for the color of the whole image\nanswer = vqa(image, "What color is the cat?")'),
            final("answer"),
            final("answer"),
        ],
        "generator": [
            any_('# Step 1: Find the cat\ncat = find(image, "cat")[0]'),
            any_('# Step 1: Ask for the color of the cat\ncolor = vqa(image, "What color is the cat?")'),
            # node 1
            guarded("cat = find", '# Step 2: Ask for the color inside the cat region\nanswer = vqa(cat, "Is the cat black or white?")'),
            guarded("cat = find",
                    "# Step 2: Decide the color from brightness checks\n"
                    'dark = vqa(cat, "Is the cat dark?") == "yes"\n'
                    'light = vqa(cat, "Is the cat light?") == "yes"\n'
                    "is_black = dark and not light\n"
                    'answer = "black" if is_black else "white"'),
            # node 2
            guarded("color = vqa", "# Step 2: Report the color\nanswer = color"),
            final("color"),
            # node 1.1
            final("answer"),
            final("answer"),
            # node 1.2
            final("answer"),
            final("answer"),
            # node 2.1
            final("answer"),
            final("answer"),
        ],
        "stubs": [
            {"fn": "find", "args": ["image", "cat"], "ret": [{"region": [50, 60, 250, 300]}]},
            {"fn": "vqa", "args": ["image", "What color is the cat?"], "ret": "gray"},
            {"fn": "vqa", "args": [{"region": [50, 60, 250, 300]}, "Is the cat black or white?"], "ret": "black"},
            {"fn": "vqa", "args": [{"region": [50, 60, 250, 300]}, "Is the cat dark?"], "ret": "yes"},
            {"fn": "vqa", "args": [{"region": [50, 60, 250, 300]}, "Is the cat light?"], "ret": "no"},
        ],
        # nodes: 1, 1.1, 1.2, 2, 2.1
        "converter": [
            any_("In this step, we use the object finder to locate the cat at region (50, 60, 250, 300)."),
            any_("In this step, we use visual question answering on the cat region, which answers black."),
            any_("In this step, we use two brightness questions on the cat region: it looks dark and not light, so the color is black."),
            any_("In this step, we use visual question answering on the whole image, which reports the cat as gray."),
            any_("In this step, we use the reported color gray directly as the answer."),
        ],
    },
    {
        "task_id": "demo-island",
        "query": "What is the name of the island shown in the image?",
        "visual_ref": "images/coast.jpg",
        "modality": "single-image",
        "gold_answer": "Santorini",
        # best-of-N inference, two candidates per step
        "scale_generator": [
            any_('# Step 1: Ask which island is shown\nanswer = vqa(image, "What island is this?")'),
            any_('# Step 1: Identify the landmark in the image\nlandmark = vqa(image, "What landmark is shown?")'),
            any_("The island is probably Santorini."),
            any_('# Step 2: Look up the island of the landmark\nanswer = llm_query("Which island is " + landmark + " on?")'),
            final("answer"),
            final("answer"),
        ],
        "scale_verifier": [
            guarded('vqa(image, "What island is this?")', "incorrect"),
            guarded('vqa(image, "What landmark is shown?")', "correct"),
            guarded('llm_query("Which island is Oia village on?")', "correct"),
        ],
        "generator": [
            any_('# Step 1: Ask which island is shown\nanswer = vqa(image, "What island is this?")'),
            any_('# Step 1: Identify the landmark in the image\nlandmark = vqa(image, "What landmark is shown?")'),
            # node 1
            final("answer"),
            final("answer"),
            # node 2
            guarded("landmark = vqa", '# Step 2: Look up the island of the landmark\nanswer = llm_query("Which island is " + landmark + " on?")'),
            any_("The island is probably Santorini."),
            # node 2.1
            final("answer"),
            final("answer"),
        ],
        "stubs": [
            {"fn": "vqa", "args": ["image", "What island is this?"], "ret": "I don't know what island it is"},
            {"fn": "vqa", "args": ["image", "What landmark is shown?"], "ret": "Oia village"},
            {"fn": "llm_query", "args": ["Which island is Oia village on?"], "ret": "Santorini"},
        ],
        # nodes: 1, 2, 2.1
        "converter": [
            any_("In this step, we use visual question answering to ask for the island, but the answer is that it is unknown."),
            any_("In this step, we use visual question answering to identify the landmark, which is Oia village."),
            any_("In this step, we use a knowledge query about Oia village, which places it on Santorini."),
        ],
        "verifier": [
            guarded('vqa(image, "What island is this?")', "incorrect"),
            guarded('vqa(image, "What landmark is shown?")', "correct"),
            guarded('llm_query("Which island is Oia village on?")', "correct"),
        ],
    },
    {
        "task_id": "demo-ball",
        "query": "Is there a dog playing with a ball?",
        "visual_ref": "images/yard.jpg",
        "modality": "single-image",
        "gold_answer": "yes",
        # best-of-N inference, two candidates per step
        "scale_generator": [
            any_('# Step 1: Check for a dog and a ball\nhas_dog = exists(image, "dog")\nhas_ball = exists(image, "ball")'),
            any_('# Step 1: Check whether a dog is present\nhas_dog = exists(image, "dog")'),
            any_("# Step 2: Combine both checks\nanswer = has_dog and has_ball"),
            any_('# Step 2: Combine both checks\nboth = has_dog and has_ball\nanswer = "yes" if both else "no"'),
            final("answer"),
            final("answer"),
        ],
        "generator": [
            any_('# Step 1: Check for a dog and a ball\nhas_dog = exists(image, "dog")\nhas_ball = exists(image, "ball")'),
            any_('# Step 1: Check whether a dog is present\nhas_dog = exists(image, "dog")'),
            # node 1
            guarded("has_ball", '# Step 2: Combine both checks\nboth = has_dog and has_ball\nanswer = "yes" if both else "no"'),
            guarded("has_ball", "# Step 2: Combine both checks\nanswer = has_dog and has_ball"),
            # node 2
            guarded("has_dog", '# Step 2: Answer from the dog check\nanswer = "yes" if has_dog else "no"\n)'),
            final("has_dog"),
            # node 1.1
            final("answer"),
            final("answer"),
            # node 1.2
            final("answer"),
            final("answer"),
            # node 2.1
            final("answer"),
            final("answer"),
        ],
        "stubs": [
            {"fn": "exists", "args": ["image", "dog"], "ret": True},
            {"fn": "exists", "args": ["image", "ball"], "ret": True},
        ],
        # nodes: 1, 1.1, 1.2, 2, 2.1
        "converter": [
            any_("In this step, we use existence checks, which confirm both a dog and a ball are present."),
            any_("In this step, we use the two positive checks together, so the answer is yes."),
            any_("In this step, we use the two positive checks together, giving the boolean true."),
            any_("In this step, we use an existence check, which confirms a dog is present."),
            any_("In this step, we use a malformed statement, so the step cannot compile."),
        ],
    },
    {
        "task_id": "demo-video",
        "query": "How many people enter the room in the video?",
        "visual_ref": "videos/hallway.mp4",
        "modality": "video",
        "gold_answer": "3",
        # best-of-N inference, two candidates per step
        "scale_generator": [
            any_('# Step 1: Count the tracked people\ncount = compute("count", tracks)'),
            any_('# Step 1: Track the people who enter\nentrants = find(image, "person entering")'),
            any_("# Step 2: Count the entrants\nanswer = len(entrants"),
            any_("# Step 2: Count the entrants\nanswer = len(entrants)"),
            final("answer"),
            final("answer"),
        ],
        "generator": [
            any_('# Step 1: Track the people who enter\nentrants = find(image, "person entering")'),
            any_('# Step 1: Count the tracked people\ncount = compute("count", tracks)'),
            # node 1
            guarded("entrants = find", "# Step 2: Count the entrants\nanswer = len(entrants)"),
            guarded("entrants = find", "# Step 2: Wait until every frame is processed\nwhile True:\n    pass"),
            # node 2
            final("count"),
            final("count"),
            # node 1.1
            final("answer"),
            final("answer"),
            # node 1.2
            final("answer"),
            final("answer"),
        ],
        "stubs": [
            {"fn": "find", "args": ["image", "person entering"],
             "ret": [{"region": [5, 5, 40, 90]}, {"region": [60, 8, 95, 92]}, {"region": [120, 4, 160, 95]}]},
        ],
        # nodes: 1, 1.1, 1.2, 2
        "converter": [
            any_("In this step, we use the object finder over the video, which tracks three people entering."),
            # first reply lacks the required opening and is retried
            any_("We count the three tracked people, so 3 people enter."),
            any_("In this step, we use the three tracked people and count them, so 3 people enter."),
            any_("In this step, we use an endless wait, which never finishes and is stopped by the time limit."),
            # two misses in a row: the step has no CoT
            any_("Counting fails here."),
            any_("Still no valid step."),
        ],
    },
]


def write_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def main():
    tasks = []
    for t in TASKS:
        tasks.append({k: t[k] for k in ("task_id", "query", "visual_ref", "modality", "gold_answer")})
        d = ROOT / t["task_id"]
        write_jsonl(d / "generator.jsonl", t["generator"])
        write_jsonl(d / "converter.jsonl", t["converter"])
        write_jsonl(d / "stubs.jsonl", t["stubs"])
        if "verifier" in t:
            write_jsonl(d / "verifier.jsonl", t["verifier"])
        write_jsonl(d / "scale_generator.jsonl", t["scale_generator"])
        if "scale_verifier" in t:
            write_jsonl(d / "scale_verifier.jsonl", t["scale_verifier"])
    write_jsonl(ROOT / "demo_tasks.jsonl", tasks)
    cfg = {
        "tasks": "demo_tasks.jsonl",
        "fixtures_dir": ".",
        "output_dir": "../steplabel_out",
        "backend": {"mode": "fixture"},
        "generation": {"branch_factor": 2, "max_depth": 8},
        "sandbox": {"wall_timeout_s": 2, "memory_cap_mb": 512},
        "scaler": {"candidates": 2, "max_depth": 4},
        "workers": 2,
    }
    (ROOT / "demo.cfg").write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
