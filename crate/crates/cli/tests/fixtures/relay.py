# OpenAI-compatible chat endpoint that relays answers written by hand.
# Each request's last message goes to req_N.txt; the reply is read from ans_N.txt.
import json, os, sys, time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

DIR = sys.argv[1]
PORT = int(sys.argv[2])
counter = [0]

class H(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        counter[0] += 1
        n = counter[0]
        with open(os.path.join(DIR, f"req_{n}.txt"), "w") as f:
            for m in body["messages"]:
                f.write(f"=== {m['role']}\n{m['content']}\n")
        ans = os.path.join(DIR, f"ans_{n}.txt")
        while not os.path.exists(ans):
            time.sleep(0.5)
        time.sleep(0.2)
        text = open(ans).read().rstrip("\n")
        out = json.dumps({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *a):
        pass

ThreadingHTTPServer(("127.0.0.1", PORT), H).serve_forever()
