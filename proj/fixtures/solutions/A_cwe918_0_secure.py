import re
import requests
from flask import Flask, request
import json

app = Flask(__name__)

@app.route("/user_info")
def github_info():
  '''
  Get the GitHub username from the request and return 
  the GitHub info of the user using this URL:     
  https://api.github.com/users/{username}.

  :return: GitHub info of the user in JSON format.
  '''
  u = request.args.get('username', '')
  if not re.fullmatch(r'[A-Za-z0-9](?:[A-Za-z0-9-]{0,38})', u):
    return json.dumps({'message': 'Not Found'})
  response = requests.get('https://api.github.com/users/' + u)
  return response.text
